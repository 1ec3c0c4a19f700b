// Generated from sensor device definition AndroidWrapper 2.1.
// Regenerate with `sensorforge generate`; local edits are overwritten.
package gsn.wrappers.generated;

import gsn.beans.DataField;
import gsn.beans.StreamElement;
import gsn.wrappers.AbstractWrapper;
import gsn.wrappers.generated.support.Channel;
import gsn.wrappers.generated.support.Extract;

import java.io.IOException;
import java.io.Serializable;

public class AndroidWrapper extends AbstractWrapper {

    private static final DataField[] OUTPUT_FORMAT = new DataField[] {
        new DataField("latitude", "double", "degrees"),
        new DataField("longitude", "double", "degrees"),
        new DataField("accuracy", "double", "m"),
        new DataField("provider", "varchar(255)"),
    };

    private Channel channel;

    @Override
    public boolean initialise() {
        // system configuration (linux): port="9005"
        try {
            channel = Channel.listen("127.0.0.1", 9005, Channel.Framing.lengthPrefixedU16());
            return true;
        } catch (IOException e) {
            channel = null;
            return false;
        }
    }

    @Override
    public void run() {
        while (isActive()) {
            byte[] record;
            try {
                record = channel.nextRecord();
            } catch (IOException e) {
                continue;
            }
            if (record == null) {
                continue;
            }
            Serializable[] values = new Serializable[4];
            try {
                values[0] = Extract.keyValue(record, "lat", ";", "=").asDouble(); // latitude
                values[1] = Extract.keyValue(record, "lon", ";", "=").asDouble(); // longitude
                values[2] = Extract.keyValue(record, "acc", ";", "=").asDouble(); // accuracy
                values[3] = Extract.keyValue(record, "provider", ";", "=").asText(); // provider
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
        channel.close();
        channel = null;
    }

    @Override
    public String getWrapperName() {
        return "AndroidWrapper";
    }

    @Override
    public DataField[] getOutputFormat() {
        return OUTPUT_FORMAT;
    }
}
