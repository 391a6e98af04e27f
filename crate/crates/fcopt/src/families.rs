//! Operator families for `diagnose`.

use std::path::Path;

use fcopt_core::control::elliptic::{elliptic_estimate_constant, EllipticSystem, SpacePair};
use fcopt_core::diagnostics::{
    classify_growth, codim_growth_verdict, GrowthRule, LevelReport, OperatorFamily, SweepReport, Verdict,
    HEURISTIC_NOTE,
};
use fcopt_core::spaces::{LinearMap, SpaceDescriptor};
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Result, RunError};

pub trait FamilyEntry: Send + Sync {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    /// The verdict the family is known to produce, checked as a criterion.
    fn expected(&self) -> Option<Verdict>;
    fn sweep(&self, levels: &[usize], rule: GrowthRule) -> Result<SweepReport>;
}

struct InverseDiagonal;

impl FamilyEntry for InverseDiagonal {
    fn name(&self) -> &'static str {
        "diag"
    }

    fn summary(&self) -> &'static str {
        "diag(1, 1/2, ..., 1/n): constant equal to n"
    }

    fn expected(&self) -> Option<Verdict> {
        Some(Verdict::Growing)
    }

    fn sweep(&self, levels: &[usize], rule: GrowthRule) -> Result<SweepReport> {
        Ok(codim_growth_verdict(&OperatorFamily::inverse_diagonal(levels)?, None, rule)?)
    }
}

struct Identity;

impl FamilyEntry for Identity {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn summary(&self) -> &'static str {
        "identity maps: constant exactly 1"
    }

    fn expected(&self) -> Option<Verdict> {
        Some(Verdict::Bounded)
    }

    fn sweep(&self, levels: &[usize], rule: GrowthRule) -> Result<SweepReport> {
        Ok(codim_growth_verdict(&OperatorFamily::identity(levels)?, None, rule)?)
    }
}

struct Elliptic(SpacePair);

impl FamilyEntry for Elliptic {
    fn name(&self) -> &'static str {
        match self.0 {
            SpacePair::L2L2 => "elliptic-l2",
            SpacePair::H1Hm1 => "elliptic-h1",
        }
    }

    fn summary(&self) -> &'static str {
        match self.0 {
            SpacePair::L2L2 => "1-D Laplacian, both sides in L2; level n means mesh width 1/n",
            SpacePair::H1Hm1 => "1-D Laplacian, H1_0 against H-1; level n means mesh width 1/n",
        }
    }

    fn expected(&self) -> Option<Verdict> {
        Some(match self.0 {
            SpacePair::L2L2 => Verdict::Growing,
            SpacePair::H1Hm1 => Verdict::Bounded,
        })
    }

    fn sweep(&self, levels: &[usize], rule: GrowthRule) -> Result<SweepReport> {
        elliptic_sweep(self.0, levels, rule)
    }
}

/// Sweep over mesh widths `1/n`, i.e. `n - 1` interior nodes per level.
pub fn elliptic_sweep(pair: SpacePair, levels: &[usize], rule: GrowthRule) -> Result<SweepReport> {
    check_levels(levels)?;
    let reports = levels
        .iter()
        .map(|&n| {
            if n < 2 {
                return Err(RunError::config("elliptic levels must be at least 2"));
            }
            let sys = EllipticSystem::laplacian(n - 1, pair)?;
            Ok(LevelReport {
                n,
                report: elliptic_estimate_constant(&sys)?.estimate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let verdict = classify_growth(&reports, rule);
    Ok(SweepReport {
        description: format!("1-D Laplacian in the {pair} pair"),
        levels: reports,
        verdict,
        rule,
        note: HEURISTIC_NOTE,
    })
}

fn check_levels(levels: &[usize]) -> Result<()> {
    if levels.len() < 3 {
        return Err(RunError::config("a sweep needs at least 3 levels"));
    }
    Ok(())
}

pub fn family_registry() -> Vec<Box<dyn FamilyEntry>> {
    vec![
        Box::new(InverseDiagonal),
        Box::new(Identity),
        Box::new(Elliptic(SpacePair::L2L2)),
        Box::new(Elliptic(SpacePair::H1Hm1)),
    ]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilyFile {
    description: Option<String>,
    level: Vec<LevelSpec>,
}

/// One operator `rows`; Euclidean spaces on both sides.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelSpec {
    n: usize,
    rows: Vec<Vec<f64>>,
}

/// Operators read from a TOML or JSON file with a `level` list.
pub fn load_family_file(path: &Path) -> Result<OperatorFamily> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |reason: String| RunError::Parse {
        path: path.to_path_buf(),
        reason,
    };
    let spec: FamilyFile = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?
    } else {
        toml::from_str(&text).map_err(|e| parse_err(e.message().to_string()))?
    };
    let levels = spec
        .level
        .iter()
        .map(|l| {
            let r = l.rows.len();
            let c = l.rows.first().map_or(0, |x| x.len());
            if r == 0 || c == 0 || l.rows.iter().any(|x| x.len() != c) {
                return Err(parse_err(format!("level {} is not a rectangular row list", l.n)));
            }
            let m = DMatrix::from_fn(r, c, |i, j| l.rows[i][j]);
            let f = LinearMap::new(m, SpaceDescriptor::identity("V", c)?, SpaceDescriptor::identity("X", r)?)?;
            Ok((l.n, f))
        })
        .collect::<Result<Vec<_>>>()?;
    let description = spec
        .description
        .unwrap_or_else(|| path.display().to_string());
    Ok(OperatorFamily::new(description, levels)?)
}

/// Sweep a named family over `levels`, or a family file over its own levels.
pub fn resolve_sweep(name: &str, levels: &[usize], rule: GrowthRule) -> Result<(SweepReport, Option<Verdict>)> {
    if let Some(entry) = family_registry().into_iter().find(|e| e.name() == name) {
        return Ok((entry.sweep(levels, rule)?, entry.expected()));
    }
    let path = Path::new(name);
    if path.is_file() {
        let family = load_family_file(path)?;
        return Ok((codim_growth_verdict(&family, None, rule)?, None));
    }
    Err(RunError::Unknown {
        kind: "family",
        name: name.into(),
    })
}
