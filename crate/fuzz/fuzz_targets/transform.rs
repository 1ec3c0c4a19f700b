#![no_main]

use std::collections::BTreeMap;
use std::sync::OnceLock;

use libfuzzer_sys::fuzz_target;
use sensorforge::codegen::{compile_plan, CompiledExtractor};
use sensorforge::definitions::{parse_sdd, OsTag};
use sensorforge::runtime::apply_program;

const CORPUS: [&str; 4] = [
    include_str!("../../fixtures/sdd/SunSPOT.sdd.xml"),
    include_str!("../../fixtures/sdd/AndroidWrapper.sdd.xml"),
    include_str!("../../fixtures/sdd/WeatherStation.sdd.xml"),
    include_str!("../../fixtures/sdd/Mica2Serial.sdd.xml"),
];

fn programs() -> &'static Vec<Vec<CompiledExtractor>> {
    static PROGRAMS: OnceLock<Vec<Vec<CompiledExtractor>>> = OnceLock::new();
    PROGRAMS.get_or_init(|| {
        CORPUS
            .iter()
            .map(|text| {
                let sdd = parse_sdd(text).unwrap();
                compile_plan(&sdd, OsTag::Linux, &BTreeMap::new()).unwrap().transform_program
            })
            .collect()
    })
}

// Every extractor must either fail cleanly or yield one value per field of the declared type.
fuzz_target!(|data: &[u8]| {
    for program in programs() {
        if let Ok(values) = apply_program(program, data) {
            assert_eq!(values.len(), program.len());
            for (v, step) in values.iter().zip(program) {
                assert_eq!(v.value_type(), step.value_type);
            }
        }
    }
});
