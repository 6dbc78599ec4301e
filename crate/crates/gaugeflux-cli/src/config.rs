//! Run configuration: one JSON document plus `path=value` overrides.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use gaugeflux::lagrangian::BuiltinKind;
use gaugeflux::lie::AlgebraConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    #[serde(rename = "N")]
    pub n: usize,
    pub c: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Overrides the resolution of the realness grids when set.
    pub points_per_axis: Option<usize>,
    /// Side of the box random sample points are drawn from.
    pub period: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { points_per_axis: None, period: TAU }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Fixed `(N, c)` for the covariance suite; the default sweeps `N ∈ {2,3,4}` and four algebras.
    pub dims: Option<Dims>,
    pub grid: GridConfig,
    /// Algebra used with `dims`; defaults to `u(c)`.
    pub algebra: Option<AlgebraConfig>,
    /// Builtin matter Lagrangians checked by `el-equivalence`.
    pub builtins: Vec<BuiltinKind>,
    /// Overrides the per-suite number of seeded instances.
    pub instances: Option<usize>,
    /// Random points evaluated per instance.
    pub points: usize,
    /// Random samples per trace identity and matrix size.
    pub samples: usize,
    /// Per-check tolerance overrides, keyed by check name.
    pub tolerances: BTreeMap<String, f64>,
    /// Refinement levels of the divergence checks.
    pub levels: usize,
    /// Coarsest stencil width for the off-shell identity.
    pub h0: f64,
    /// Coarsest stencil width for on-shell conservation.
    pub onshell_h0: f64,
    pub min_order: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 42,
            dims: None,
            grid: GridConfig::default(),
            algebra: None,
            builtins: BuiltinKind::ALL.to_vec(),
            instances: None,
            points: 6,
            samples: 1000,
            tolerances: BTreeMap::new(),
            levels: 3,
            h0: 0.2,
            onshell_h0: 0.02,
            min_order: 1.9,
        }
    }
}

impl SuiteConfig {
    /// Defaults, then the optional file, then each `--set` in order.
    pub fn load(file: Option<&Value>, sets: &[String]) -> Result<(Self, Value), CliError> {
        let mut v = serde_json::to_value(SuiteConfig::default()).expect("default config serializes");
        if let Some(f) = file {
            if !f.is_object() {
                return Err(CliError::Validation("config must be a JSON object".into()));
            }
            merge(&mut v, f);
        }
        for s in sets {
            let (path, raw) = s
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects path=value, got `{s}`")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut v, path, value)?;
        }
        let cfg: SuiteConfig = serde_json::from_value(v).map_err(|e| CliError::Validation(format!("config: {e}")))?;
        cfg.validate()?;
        let echo = serde_json::to_value(&cfg).expect("config serializes");
        Ok((cfg, echo))
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        if let Some((k, t)) = self.tolerances.iter().find(|(_, t)| !(**t > 0.0)) {
            return bad(format!("tolerance `{k}` must be positive, got {t}"));
        }
        if self.levels < 2 {
            return bad(format!("order checks need at least 2 refinement levels, got {}", self.levels));
        }
        if !(self.h0 > 0.0 && self.onshell_h0 > 0.0 && self.grid.period > 0.0) {
            return bad("h0, onshell_h0 and grid.period must be positive".into());
        }
        if self.points == 0 || self.samples == 0 || self.instances == Some(0) {
            return bad("points, samples and instances must be positive".into());
        }
        if let Some(d) = &self.dims {
            if !(2..=4).contains(&d.n) || d.c == 0 {
                return bad(format!("dims need 2 <= N <= 4 and c >= 1, got N={} c={}", d.n, d.c));
            }
        }
        if matches!(self.grid.points_per_axis, Some(p) if p < 4) {
            return bad("grid.points_per_axis must be at least 4".into());
        }
        Ok(())
    }

    pub fn tolerance(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }

    pub fn instances_or(&self, default: usize) -> usize {
        self.instances.unwrap_or(default)
    }
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Usage(format!("bad --set path `{path}`")));
    }
    let mut cur = root;
    for k in &keys[..keys.len() - 1] {
        if !cur.get(*k).is_some_and(Value::is_object) {
            cur.as_object_mut()
                .ok_or_else(|| CliError::Validation(format!("`{path}` goes through a non-object")))?
                .insert(k.to_string(), Value::Object(Default::default()));
        }
        cur = cur.get_mut(*k).expect("just inserted");
    }
    cur.as_object_mut()
        .ok_or_else(|| CliError::Validation(format!("`{path}` goes through a non-object")))?
        .insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_apply_in_order() {
        let file = json!({"seed": 7, "grid": {"period": 3.0}});
        let sets = vec!["seed=9".to_string(), "tolerances.field-strength-covariance=1e-9".to_string()];
        let (cfg, echo) = SuiteConfig::load(Some(&file), &sets).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.grid.period, 3.0);
        assert_eq!(cfg.tolerance("field-strength-covariance", 1.0), 1e-9);
        assert_eq!(echo["levels"], json!(3));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let load = |sets: &[&str]| SuiteConfig::load(None, &sets.iter().map(|s| s.to_string()).collect::<Vec<_>>());
        assert!(matches!(load(&["levels=1"]), Err(CliError::Validation(_))));
        assert!(matches!(load(&["tolerances.x=0"]), Err(CliError::Validation(_))));
        assert!(matches!(load(&["bogus=1"]), Err(CliError::Validation(_))));
        assert!(matches!(load(&["seed"]), Err(CliError::Usage(_))));
        assert!(load(&["dims={\"N\":4,\"c\":2}"]).is_ok());
        assert!(load(&[r#"algebra={"kind":"byJ","J":[[1,0],[0,-1]]}"#]).is_ok());
    }
}
