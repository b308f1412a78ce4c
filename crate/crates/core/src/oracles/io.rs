//! Instance persistence: one JSON schema per family, validated on load.

use crate::error::{Error, Result};
use crate::oracles::Instance;
use std::path::Path;

/// Loads and validates an instance file, attaching the path and, for syntax
/// errors, the line/column to the diagnostic.
pub fn load_instance(path: &Path) -> Result<Instance> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::instance(format!("{}: {e}", path.display())))?;
    let instance: Instance = serde_json::from_str(&text).map_err(|e| {
        Error::instance(format!(
            "{}: line {} column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })?;
    instance
        .validate()
        .map_err(|e| Error::instance(format!("{}: {e}", path.display())))?;
    Ok(instance)
}

pub fn save_instance(path: &Path, instance: &Instance) -> Result<()> {
    instance.validate()?;
    let text = serde_json::to_string(instance)?;
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{generate_gap, generate_mcnd, GapGenParams, McndGenParams};

    #[test]
    fn round_trips_both_families() {
        let dir = tempfile::tempdir().unwrap();

        let mcnd = Instance::Mcnd(generate_mcnd(&McndGenParams::default(), 1).unwrap());
        let p = dir.path().join("m.json");
        save_instance(&p, &mcnd).unwrap();
        let back = load_instance(&p).unwrap();
        assert_eq!(
            serde_json::to_string(&mcnd).unwrap(),
            serde_json::to_string(&back).unwrap()
        );

        let gap = Instance::Gap(generate_gap(&GapGenParams::default(), 1).unwrap());
        let p = dir.path().join("g.json");
        save_instance(&p, &gap).unwrap();
        let back = load_instance(&p).unwrap();
        assert_eq!(
            serde_json::to_string(&gap).unwrap(),
            serde_json::to_string(&back).unwrap()
        );
    }

    #[test]
    fn schema_matches_documented_layout() {
        let text = r#"{"type":"mcnd","nodes":2,
            "arcs":[{"tail":0,"head":1,"capacity":5.0,"fixed":2.0,"routing":[1.0]}],
            "commodities":[{"origin":0,"dest":1,"volume":3}]}"#;
        let instance: Instance = serde_json::from_str(text).unwrap();
        instance.validate().unwrap();

        let text = r#"{"type":"gap","profits":[[4],[3]],"weights":[[3],[3]],"capacities":[5]}"#;
        let instance: Instance = serde_json::from_str(text).unwrap();
        instance.validate().unwrap();
    }

    #[test]
    fn loader_rejects_invalid_with_field_diagnostic() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.json");

        // Semantic failure: zero capacity on arc 0.
        std::fs::write(
            &p,
            r#"{"type":"mcnd","nodes":2,
               "arcs":[{"tail":0,"head":1,"capacity":0.0,"fixed":2.0,"routing":[1.0]}],
               "commodities":[{"origin":0,"dest":1,"volume":3}]}"#,
        )
        .unwrap();
        let err = load_instance(&p).unwrap_err().to_string();
        assert!(err.contains("arc 0"), "diagnostic was: {err}");

        // Real-valued weights must be rejected at parse time.
        std::fs::write(
            &p,
            r#"{"type":"gap","profits":[[4]],"weights":[[2.5]],"capacities":[5]}"#,
        )
        .unwrap();
        let err = load_instance(&p).unwrap_err().to_string();
        assert!(err.contains("line"), "diagnostic was: {err}");
    }
}
