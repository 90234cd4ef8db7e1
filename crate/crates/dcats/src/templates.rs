//! Text templates with named placeholders.
//!
//! All agent-facing wording lives in external `.txt` files so the prompts can
//! be re-skinned per domain without touching code. Placeholders use the
//! `{{name}}` form; single-brace text (as it appears in the output-format
//! section shown to the agent) is left untouched.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Default templates compiled into the binary.
const BUILTIN: &[(&str, &str)] = &[
    ("location_base", include_str!("../templates/location_base.txt")),
    (
        "location_base_annotated",
        include_str!("../templates/location_base_annotated.txt"),
    ),
    (
        "location_population",
        include_str!("../templates/location_population.txt"),
    ),
    (
        "location_freeway",
        include_str!("../templates/location_freeway.txt"),
    ),
    (
        "location_freeway_no_lanes",
        include_str!("../templates/location_freeway_no_lanes.txt"),
    ),
    (
        "background_default",
        include_str!("../templates/background_default.txt"),
    ),
    ("initial_task", include_str!("../templates/initial_task.txt")),
    (
        "initial_guidelines",
        include_str!("../templates/initial_guidelines.txt"),
    ),
    ("output_format", include_str!("../templates/output_format.txt")),
    (
        "neighbor_set_pattern",
        include_str!("../templates/neighbor_set_pattern.txt"),
    ),
    (
        "neighbor_set_road",
        include_str!("../templates/neighbor_set_road.txt"),
    ),
    (
        "neighbor_set_geodetic",
        include_str!("../templates/neighbor_set_geodetic.txt"),
    ),
    (
        "refine_objective",
        include_str!("../templates/refine_objective.txt"),
    ),
    (
        "refine_background",
        include_str!("../templates/refine_background.txt"),
    ),
    ("refine_task", include_str!("../templates/refine_task.txt")),
    (
        "refine_considerations",
        include_str!("../templates/refine_considerations.txt"),
    ),
];

/// A named collection of templates, builtin by default with optional
/// per-file overrides loaded from a directory.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    map: BTreeMap<String, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let map = BUILTIN
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        TemplateSet { map }
    }

    /// Builtin templates overridden by any `<name>.txt` file in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut set = Self::builtin();
        for entry in std::fs::read_dir(dir)? {
            let entry = entry?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            set.map.insert(stem.to_string(), std::fs::read_to_string(&path)?);
        }
        Ok(set)
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.map
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::config(format!("missing template '{key}'")))
    }

    /// Render the named template with the given placeholder values.
    pub fn render(&self, key: &str, vars: &[(&str, &str)]) -> Result<String> {
        render_str(self.get(key)?, vars)
    }
}

/// Substitute `{{name}}` placeholders. Any placeholder left unresolved is an
/// error so typos in template files surface immediately.
pub fn render_str(template: &str, vars: &[(&str, &str)]) -> Result<String> {
    let mut out = template.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{{{name}}}}}"), value);
    }
    if let Some(start) = out.find("{{") {
        let tail: String = out[start..].chars().take(40).collect();
        return Err(Error::config(format!(
            "unresolved template placeholder near '{tail}'"
        )));
    }
    Ok(out)
}

/// Format an integer with comma thousands separators (e.g. 41700 -> "41,700").
pub fn group_thousands(value: u64) -> String {
    let digits = value.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    let offset = digits.len() % 3;
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (i + 3 - offset) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_substitutes_named_placeholders() {
        let s = render_str("a={{x}}, b={{y}}, x again {{x}}", &[("x", "1"), ("y", "2")]).unwrap();
        assert_eq!(s, "a=1, b=2, x again 1");
    }

    #[test]
    fn render_leaves_single_braces_alone() {
        let s = render_str("Proposal {proposal_number}", &[]).unwrap();
        assert_eq!(s, "Proposal {proposal_number}");
    }

    #[test]
    fn render_rejects_unresolved_placeholder() {
        assert!(render_str("{{missing}}", &[]).is_err());
    }

    #[test]
    fn builtin_set_has_all_keys() {
        let set = TemplateSet::builtin();
        for (key, _) in BUILTIN {
            assert!(set.get(key).is_ok(), "missing builtin {key}");
        }
    }

    #[test]
    fn thousands_grouping() {
        assert_eq!(group_thousands(0), "0");
        assert_eq!(group_thousands(999), "999");
        assert_eq!(group_thousands(41700), "41,700");
        assert_eq!(group_thousands(969655), "969,655");
        assert_eq!(group_thousands(1234567890), "1,234,567,890");
    }
}
