// Generated from sensor device definition Mica2Serial 0.9.1.
// Regenerate with `sensorforge generate`; local edits are overwritten.
package gsn.wrappers.generated;

import gsn.beans.DataField;
import gsn.beans.StreamElement;
import gsn.wrappers.AbstractWrapper;
import gsn.wrappers.generated.support.Channel;
import gsn.wrappers.generated.support.Extract;

import java.io.IOException;
import java.io.Serializable;

public class Mica2SerialWrapper extends AbstractWrapper {

    private static final DataField[] OUTPUT_FORMAT = new DataField[] {
        new DataField("nodeId", "bigint"),
        new DataField("voltage", "double", "V"),
        new DataField("status", "varchar(255)"),
        new DataField("light", "bigint", "lux"),
    };

    private Channel channel;

    @Override
    public boolean initialise() {
        // system configuration (linux): baudRate="57600", serialPort="/dev/ttyACM0"
        try {
            channel = Channel.tail("/dev/ttyACM0", Channel.Framing.fixed(24));
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
                values[0] = Extract.binary(record, 0, 8, Extract.Encoding.I64_BIG_ENDIAN).asLong(); // nodeId
                values[1] = Extract.binary(record, 8, 8, Extract.Encoding.IEEE754_F64_BIG_ENDIAN).asDouble(); // voltage
                values[2] = Extract.binary(record, 16, 4, Extract.Encoding.UTF8).asText(); // status
                values[3] = Extract.binary(record, 20, 4, Extract.Encoding.ASCII_NUMBER).asLong(); // light
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
        return "Mica2Serial";
    }

    @Override
    public DataField[] getOutputFormat() {
        return OUTPUT_FORMAT;
    }
}
