mod common;

use std::collections::BTreeMap;

use common::{fixtures, sdd, sdd_corpus};
use sensorforge::codegen::*;
use sensorforge::definitions::*;

fn overrides(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[test]
fn serial_port_resolves_per_os() {
    let s = sdd("Mica2Serial");
    let none = BTreeMap::new();
    assert_eq!(resolve_config(&s, OsTag::Linux, &none).unwrap()["serialPort"], "/dev/ttyACM0");
    assert_eq!(resolve_config(&s, OsTag::Windows, &none).unwrap()["serialPort"], "COM3");
    let cfg = resolve_config(&s, OsTag::Linux, &overrides(&[("serialPort", "/tmp/x"), ("junk", "1")])).unwrap();
    assert_eq!(cfg["serialPort"], "/tmp/x");
    assert!(!cfg.contains_key("junk"));
}

#[test]
fn required_key_without_value_is_an_error() {
    let mut s = sdd("Mica2Serial");
    s.system_config[0].per_os_default.clear();
    assert_eq!(
        resolve_config(&s, OsTag::Linux, &BTreeMap::new()),
        Err(CompileError::MissingRequiredConfig("serialPort".into()))
    );
    s.system_config[1].overridable = false;
    assert_eq!(
        resolve_config(&s, OsTag::Linux, &overrides(&[("serialPort", "/x"), ("baudRate", "9600")])),
        Err(CompileError::OverrideNotPermitted("baudRate".into()))
    );
}

#[test]
fn sunspot_plan_listens_on_override_port() {
    let s = sdd("SunSPOT");
    let plan = compile_plan(&s, OsTag::Linux, &overrides(&[("port", "9005")])).unwrap();
    assert_eq!(
        plan.binding,
        TransportBinding::PushListen { addr: "127.0.0.1:9005".parse().unwrap() }
    );
    assert_eq!(plan.output_schema.len(), 3);
    assert_eq!(plan.transform_program.len(), 3);
    for (step, field) in plan.transform_program.iter().zip(&plan.output_schema) {
        assert_eq!(step.field, field.name);
    }
    let again = compile_plan(&s, OsTag::Linux, &overrides(&[("port", "9005")])).unwrap();
    assert_eq!(plan, again);
}

#[test]
fn bad_bindings_are_rejected() {
    let s = sdd("SunSPOT");
    for port in ["abc", "0", "70000"] {
        assert!(matches!(
            compile_plan(&s, OsTag::Linux, &overrides(&[("port", port)])),
            Err(CompileError::InvalidBinding(_))
        ));
    }
    let m = sdd("Mica2Serial");
    assert!(matches!(
        compile_plan(&m, OsTag::Linux, &overrides(&[("serialPort", "")])),
        Err(CompileError::InvalidBinding(_))
    ));
}

#[test]
fn binary_extractor_past_fixed_frame_is_inconsistent() {
    let mut s = sdd("Mica2Serial");
    s.connection.framing = Framing::Fixed(8);
    s.data_structure.truncate(1);
    s.transformation.truncate(1);
    s.transformation[0].extractor = Extractor::Binary {
        offset: 4,
        length: 8,
        encoding: BinaryEncoding::I64BigEndian,
    };
    assert!(matches!(
        compile_plan(&s, OsTag::Linux, &BTreeMap::new()),
        Err(CompileError::PlanConsistency(_))
    ));
}

#[test]
fn plans_never_leak_placeholders() {
    for (name, _) in sdd_corpus() {
        let s = sdd(&name);
        let plan = compile_plan(&s, OsTag::Linux, &BTreeMap::new()).unwrap();
        assert!(!format!("{plan:?}").contains("${"), "{name}");
        assert_eq!(plan.output_schema, s.data_structure, "{name}");
    }
}

fn golden_path(name: &str) -> std::path::PathBuf {
    fixtures().join("golden").join(format!("{name}.gsn-java-stub.java"))
}

#[test]
fn emitted_source_matches_golden_files() {
    let template = WrapperTemplate::builtin("gsn-java-stub").unwrap();
    for (name, _) in sdd_corpus() {
        let s = sdd(&name);
        let first = emit_source(&s, &template, OsTag::Linux, &BTreeMap::new()).unwrap();
        let second = emit_source(&s, &template, OsTag::Linux, &BTreeMap::new()).unwrap();
        assert_eq!(first, second, "{name}");
        assert!(!first.contains("${") && !first.contains("{{"), "{name}");
        let path = golden_path(&name);
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(&path, &first).unwrap();
        }
        let golden = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("{}: {e} (run with UPDATE_GOLDEN=1)", path.display()));
        assert_eq!(first, golden, "{name} drifted from its golden file");
    }
}

#[test]
fn sunspot_source_lists_every_field() {
    let template = WrapperTemplate::builtin("gsn-java-stub").unwrap();
    let text = emit_source(&sdd("SunSPOT"), &template, OsTag::Linux, &BTreeMap::new()).unwrap();
    assert!(text.contains("\"SunSPOT\""));
    for field in ["temperature", "light", "acceleration"] {
        assert_eq!(
            text.lines().filter(|l| l.contains("new DataField(\"") && l.contains(field)).count(),
            1,
            "{field}"
        );
    }
}

#[test]
fn placeholder_free_template_is_identity() {
    let t = WrapperTemplate::new("plain", "no placeholders here\n", Default::default()).unwrap();
    let out = emit_source(&sdd("SunSPOT"), &t, OsTag::Linux, &BTreeMap::new()).unwrap();
    assert_eq!(out, "no placeholders here\n");
}

#[test]
fn unfillable_placeholder_is_unbound() {
    let t = WrapperTemplate::new(
        "odd",
        "{{vendor_logo}}",
        ["vendor_logo".to_string()].into_iter().collect(),
    )
    .unwrap();
    assert_eq!(
        emit_source(&sdd("SunSPOT"), &t, OsTag::Linux, &BTreeMap::new()),
        Err(EmitError::UnboundPlaceholder("vendor_logo".into()))
    );
    assert!(WrapperTemplate::new("odd", "{{x}}", Default::default()).is_err());
}

mod fetch {
    use super::*;
    use sha2::{Digest, Sha256};

    fn with_library(dir: &std::path::Path, checksum: Option<String>, platform: &str) -> SensorDeviceDefinition {
        let artifact = dir.join("driver.jar");
        std::fs::write(&artifact, b"driver bytes").unwrap();
        let mut s = sdd("SunSPOT");
        s.libraries = vec![LibraryRequirement {
            package_name: "driver.jar".into(),
            source_url: url::Url::from_file_path(&artifact).unwrap().to_string(),
            platform_tag: platform.into(),
            checksum,
        }];
        s
    }

    fn digest() -> String {
        hex::encode(Sha256::digest(b"driver bytes"))
    }

    fn cache_files(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
        let mut out = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in std::fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() { stack.push(p) } else { out.push(p) }
            }
        }
        out
    }

    #[test]
    fn fetched_then_cached() {
        let src = tempfile::tempdir().unwrap();
        let cache = tempfile::tempdir().unwrap();
        let s = with_library(src.path(), Some(digest()), "jvm");
        let first = fetch_libraries(&s, "jvm", cache.path()).unwrap();
        let FetchOutcome::Fetched(path) = &first.outcomes[0].1 else { panic!("{first:?}") };
        assert_eq!(std::fs::read(path).unwrap(), b"driver bytes");
        let second = fetch_libraries(&s, "jvm", cache.path()).unwrap();
        assert_eq!(second.outcomes[0].1, FetchOutcome::Cached(path.clone()));
    }

    #[test]
    fn wrong_checksum_places_nothing() {
        let src = tempfile::tempdir().unwrap();
        let cache = tempfile::tempdir().unwrap();
        let mut bad = digest();
        let flipped = if bad.starts_with('0') { "1" } else { "0" };
        bad.replace_range(0..1, flipped);
        let s = with_library(src.path(), Some(bad), "jvm");
        let report = fetch_libraries(&s, "jvm", cache.path()).unwrap();
        assert!(matches!(report.outcomes[0].1, FetchOutcome::ChecksumMismatch { .. }));
        assert!(cache_files(cache.path()).is_empty());
    }

    #[test]
    fn platform_filter_and_unreachable() {
        let src = tempfile::tempdir().unwrap();
        let cache = tempfile::tempdir().unwrap();
        let s = with_library(src.path(), None, "native");
        let report = fetch_libraries(&s, "jvm", cache.path()).unwrap();
        assert_eq!(report.outcomes[0].1, FetchOutcome::SkippedPlatform);

        let any = with_library(src.path(), None, "any");
        std::fs::remove_file(src.path().join("driver.jar")).unwrap();
        let report = fetch_libraries(&any, "jvm", cache.path()).unwrap();
        assert!(matches!(report.outcomes[0].1, FetchOutcome::Unreachable(_)));
    }

    #[test]
    fn unwritable_cache_fails_the_call() {
        let src = tempfile::tempdir().unwrap();
        let blocker = tempfile::NamedTempFile::new().unwrap();
        let s = with_library(src.path(), Some(digest()), "jvm");
        assert!(fetch_libraries(&s, "jvm", &blocker.path().join("cache")).is_err());
    }
}
