// Generated from sensor device definition SunSPOT 1.0.0.
// Regenerate with `sensorforge generate`; local edits are overwritten.
package gsn.wrappers.generated;

import gsn.beans.DataField;
import gsn.beans.StreamElement;
import gsn.wrappers.AbstractWrapper;
import gsn.wrappers.generated.support.Channel;
import gsn.wrappers.generated.support.Extract;

import java.io.IOException;
import java.io.Serializable;

public class SunSPOTWrapper extends AbstractWrapper {

    private static final DataField[] OUTPUT_FORMAT = new DataField[] {
        new DataField("temperature", "double", "celsius"),
        new DataField("light", "bigint", "lux"),
        new DataField("acceleration", "double", "g"),
    };

    private Channel channel;

    @Override
    public boolean initialise() {
        // system configuration (linux): bindHost="127.0.0.1", port="9010"
        try {
            channel = Channel.listen("127.0.0.1", 9010, Channel.Framing.lineDelimited());
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
            Serializable[] values = new Serializable[3];
            try {
                values[0] = Extract.delimited(record, ",", 0).asDouble(); // temperature
                values[1] = Extract.delimited(record, ",", 1).asLong(); // light
                values[2] = Extract.delimited(record, ",", 2).asDouble(); // acceleration
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
        return "SunSPOT";
    }

    @Override
    public DataField[] getOutputFormat() {
        return OUTPUT_FORMAT;
    }
}
