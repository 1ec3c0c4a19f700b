// Generated from sensor device definition WeatherStation 1.2.0.
// Regenerate with `sensorforge generate`; local edits are overwritten.
package gsn.wrappers.generated;

import gsn.beans.DataField;
import gsn.beans.StreamElement;
import gsn.wrappers.AbstractWrapper;
import gsn.wrappers.generated.support.Channel;
import gsn.wrappers.generated.support.Extract;

import java.io.IOException;
import java.io.Serializable;

public class WeatherStationWrapper extends AbstractWrapper {

    private static final DataField[] OUTPUT_FORMAT = new DataField[] {
        new DataField("station", "varchar(255)"),
        new DataField("temperature", "double", "celsius"),
        new DataField("humidity", "bigint", "percent"),
        new DataField("raining", "boolean"),
    };

    private Channel channel;

    @Override
    public boolean initialise() {
        // system configuration (linux): host="127.0.0.1", port="9020"
        try {
            channel = Channel.connect("127.0.0.1", 9020, Channel.Framing.lineDelimited());
            return true;
        } catch (IOException e) {
            channel = null;
            return false;
        }
    }

    @Override
    public void run() {
        while (isActive()) {
            try {
                Thread.sleep(100L);
            } catch (InterruptedException e) {
                return;
            }
            byte[] record;
            try {
                channel.send(Channel.utf8("POLL\n"));
                record = channel.nextRecord();
            } catch (IOException e) {
                continue;
            }
            if (record == null) {
                continue;
            }
            Serializable[] values = new Serializable[4];
            try {
                values[0] = Extract.delimited(record, ";", 0).asText(); // station
                values[1] = Extract.delimited(record, ";", 1).asDouble(); // temperature
                values[2] = Extract.delimited(record, ";", 2).asLong(); // humidity
                values[3] = Extract.delimited(record, ";", 3).asBoolean(); // raining
            } catch (Extract.MalformedRecord e) {
                continue;
            }
            postStreamElement(new StreamElement(OUTPUT_FORMAT, values, System.currentTimeMillis()));
        }
    }

    @Override
    public void finalise() {
        if (channel == null) {
            return;
        }
        try {
            channel.send(Channel.utf8("BYE\n"));
        } catch (IOException e) {
            // the channel is closed below either way
        }
        channel.close();
        channel = null;
    }

    @Override
    public String getWrapperName() {
        return "WeatherStation";
    }

    @Override
    public DataField[] getOutputFormat() {
        return OUTPUT_FORMAT;
    }
}
