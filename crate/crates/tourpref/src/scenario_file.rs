//! JSON scenario files.
//!
//! ```json
//! {
//!   "name": "coastline",
//!   "depot": { "x": 0.0, "y": 0.0 },
//!   "num_robots": 4,
//!   "budget_factor": 2.0,
//!   "regions": [ { "id": 0, "points": [ { "x": 10.0, "y": 3.5 } ] } ]
//! }
//! ```
//!
//! `budgets` (one per robot) may replace `budget_factor`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tourpref_core::scenario::{BudgetRule, RegionSpec};
use tourpref_core::{Environment, Point};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub depot: Point,
    pub num_robots: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budgets: Option<Vec<f64>>,
    pub regions: Vec<RegionSpec>,
}

impl ScenarioFile {
    pub fn from_environment(env: &Environment, name: Option<String>) -> Self {
        let (budget_factor, budgets) = match env.budget_rule() {
            BudgetRule::Factor(f) => (Some(*f), None),
            BudgetRule::Explicit(b) => (None, Some(b.clone())),
        };
        ScenarioFile {
            name,
            depot: env.depot_position(),
            num_robots: env.num_robots(),
            budget_factor,
            budgets,
            regions: env.region_specs(),
        }
    }

    pub fn build(&self) -> Result<Environment> {
        let rule = match (self.budget_factor, &self.budgets) {
            (Some(f), None) => BudgetRule::Factor(f),
            (None, Some(b)) => BudgetRule::Explicit(b.clone()),
            (None, None) => bail!("scenario needs either budget_factor or budgets"),
            (Some(_), Some(_)) => bail!("scenario gives both budget_factor and budgets"),
        };
        Ok(Environment::build(
            self.depot,
            self.regions.clone(),
            self.num_robots,
            rule,
        )?)
    }
}

pub fn parse_scenario(text: &str) -> Result<ScenarioFile> {
    Ok(serde_json::from_str(text)?)
}

pub fn load_scenario(path: &Path) -> Result<(ScenarioFile, Environment)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file = parse_scenario(&text).with_context(|| format!("parsing {}", path.display()))?;
    let env = file
        .build()
        .with_context(|| format!("building environment from {}", path.display()))?;
    Ok((file, env))
}

pub fn write_scenario(path: &Path, file: &ScenarioFile) -> Result<()> {
    let mut text = serde_json::to_string_pretty(file)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Scenario files (`*.json`) in `dir`, sorted by file stem.
pub fn list_scenarios(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path));
            }
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tourpref_core::scenario::{generate_random_scenario, ScenarioConfig};

    #[test]
    fn generated_scenario_round_trips() {
        let env = generate_random_scenario(&ScenarioConfig { seed: 4, ..Default::default() }).unwrap();
        let file = ScenarioFile::from_environment(&env, Some("g".into()));
        let text = serde_json::to_string(&file).unwrap();
        let back = parse_scenario(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.build().unwrap(), env);
    }

    #[test]
    fn budget_rules_are_exclusive() {
        let text = r#"{"depot":{"x":0,"y":0},"num_robots":1,
            "regions":[{"id":3,"points":[{"x":1,"y":0}]}]}"#;
        assert!(parse_scenario(text).unwrap().build().is_err());
        let both = text.replace("\"num_robots\":1", "\"num_robots\":1,\"budget_factor\":2,\"budgets\":[2]");
        assert!(parse_scenario(&both).unwrap().build().is_err());
        let explicit = text.replace("\"num_robots\":1", "\"num_robots\":1,\"budgets\":[5]");
        let env = parse_scenario(&explicit).unwrap().build().unwrap();
        assert_eq!(env.budgets(), &[5.0]);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"depot":{"x":0,"y":0},"num_robots":1,"budget_factor":2,"robots":3,
            "regions":[{"id":0,"points":[{"x":1,"y":0}]}]}"#;
        let err = parse_scenario(text).unwrap_err().to_string();
        assert!(err.contains("robots"), "{err}");
    }
}
