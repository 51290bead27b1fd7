//! Runs one trajectory and checks every inequality of the convergence argument on it.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::analysis::{self, bound_constants_from_norms, bound_constants_pairwise_from_norms, BoundCheck};
use crate::error::Result;
use crate::experiment::{run_trajectory_observed, ExperimentConfig};
use crate::io::IoError;
use crate::scalar::Scalar;
use crate::spectral::{degree_bound_check, weighted_fiedler_check};

/// Per-step quantities of one trajectory, plus the checks that need the full matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundTrace {
    pub config: ExperimentConfig,
    pub v_norms: Vec<f64>,
    pub x_norms: Vec<f64>,
    pub phis: Vec<f64>,
    pub phi_plains: Vec<f64>,
    pub mus: Vec<Option<f64>>,
    pub degree: BoundCheck<f64>,
    pub weighted_fiedler: BoundCheck<f64>,
}

/// Steps the configured system (always recording every step) and collects a [`BoundTrace`].
pub fn collect_bound_trace(config: &ExperimentConfig) -> Result<BoundTrace> {
    let config = ExperimentConfig {
        record_stride: 1,
        ..config.clone()
    };
    let tol = f64::EIGEN_TOL;
    let mut trace = BoundTrace {
        config: config.clone(),
        v_norms: Vec::new(),
        x_norms: Vec::new(),
        phis: Vec::new(),
        phi_plains: Vec::new(),
        mus: Vec::new(),
        degree: BoundCheck::default(),
        weighted_fiedler: BoundCheck::default(),
    };
    run_trajectory_observed(&config, 0, |obs| {
        let t = obs.t as usize;
        trace.v_norms.push(obs.v_norm);
        trace.x_norms.push(obs.x_norm);
        trace.phis.push(obs.fiedler_colored);
        trace.phi_plains.push(obs.fiedler_plain);
        trace.mus.push(obs.mu);
        trace.degree.record(t, degree_bound_check(obs.weights, tol)?);
        trace
            .weighted_fiedler
            .record(t, weighted_fiedler_check(obs.weights, obs.mask, tol)?);
        Ok(())
    })?;
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedCheck {
    pub name: &'static str,
    pub check: BoundCheck<f64>,
    pub note: Option<String>,
}

impl NamedCheck {
    pub fn passed(&self) -> bool {
        self.check.passed()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub config: ExperimentConfig,
    pub steps: usize,
    pub phi_plain_mean: f64,
    pub checks: Vec<NamedCheck>,
}

impl BoundsReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(NamedCheck::passed)
    }

    pub fn check(&self, name: &str) -> Option<&NamedCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# k={} alpha={} lambda={} h={} horizon={} seed={} steps={} mean_fiedler_plain={:.6}",
            c.k, c.alpha, c.lambda, c.h, c.horizon, c.master_seed, self.steps, self.phi_plain_mean
        );
        for nc in &self.checks {
            let ch = &nc.check;
            let _ = write!(
                s,
                "{} {} checked={} violations={}",
                if nc.passed() { "PASS" } else { "FAIL" },
                nc.name,
                ch.checked,
                ch.violations
            );
            if let Some(m) = ch.worst_margin {
                let _ = write!(s, " worst_margin={m:.6e}");
            }
            if let Some(t) = ch.first_violation {
                let _ = write!(s, " first_violation={t}");
            }
            if let Some(n) = &nc.note {
                let _ = write!(s, " ({n})");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "{}", if self.all_passed() { "ALL PASS" } else { "FAILED" });
        s
    }
}

fn failed(note: String) -> (BoundCheck<f64>, Option<String>) {
    let check = BoundCheck {
        checked: 1,
        violations: 1,
        first_violation: Some(0),
        worst_margin: None,
    };
    (check, Some(note))
}

/// Evaluates the bound chain on a trace.
pub fn evaluate(trace: &BoundTrace) -> BoundsReport {
    let cfg = &trace.config;
    let h = cfg.h;
    let steps = trace.v_norms.len();
    let phi_plain_mean = if steps == 0 {
        0.0
    } else {
        trace.phi_plains.iter().sum::<f64>() / steps as f64
    };
    let v0 = trace.v_norms.first().copied().unwrap_or(0.0);
    let x0 = trace.x_norms.first().copied().unwrap_or(0.0);

    let mut checks = Vec::new();
    checks.push(NamedCheck {
        name: "contraction",
        check: analysis::contraction_check(&trace.v_norms, &trace.phis, h),
        note: None,
    });

    let (mu_check, mu_note) = match cfg
        .params()
        .and_then(|p| bound_constants_from_norms(x0, v0, &p, phi_plain_mean))
    {
        Ok(c) => (
            analysis::mu_bound_check(&trace.mus, &c),
            Some(format!("A={:.6e} B={:.6e}", c.a, c.b)),
        ),
        Err(crate::error::FlockError::AlreadyFlocking) => {
            (BoundCheck::default(), Some("consensus start, nothing to bound".into()))
        }
        Err(e) => failed(e.to_string()),
    };
    checks.push(NamedCheck {
        name: "mu-lower-bound",
        check: mu_check,
        note: mu_note,
    });
    let (mu_check, mu_note) = match cfg
        .params()
        .and_then(|p| bound_constants_pairwise_from_norms(x0, v0, &p, phi_plain_mean))
    {
        Ok(c) => (
            analysis::mu_bound_check(&trace.mus, &c),
            Some(format!("distances bounded by sqrt(2)|x|, A={:.6e} B={:.6e}", c.a, c.b)),
        ),
        Err(crate::error::FlockError::AlreadyFlocking) => {
            (BoundCheck::default(), Some("consensus start, nothing to bound".into()))
        }
        Err(e) => failed(e.to_string()),
    };
    checks.push(NamedCheck {
        name: "mu-lower-bound-pairwise",
        check: mu_check,
        note: mu_note,
    });
    checks.push(NamedCheck {
        name: "weighted-fiedler",
        check: trace.weighted_fiedler.clone(),
        note: None,
    });
    checks.push(NamedCheck {
        name: "degree-bound",
        check: trace.degree.clone(),
        note: None,
    });
    let (series, series_note) = match analysis::velocity_series_bound_check(&trace.v_norms, &trace.phis, h) {
        Ok(c) => (c, None),
        Err(e) => failed(e.to_string()),
    };
    checks.push(NamedCheck {
        name: "velocity-series",
        check: series,
        note: series_note,
    });
    checks.push(NamedCheck {
        name: "position-growth",
        check: analysis::position_growth_check(&trace.x_norms, v0, h),
        note: None,
    });
    BoundsReport {
        config: cfg.clone(),
        steps,
        phi_plain_mean,
        checks,
    }
}

/// Runs the checks for `config` and writes the text report to `path`.
pub fn verify_bounds_report(config: &ExperimentConfig, path: &Path) -> std::result::Result<BoundsReport, IoError> {
    let report = evaluate(&collect_bound_trace(config)?);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| IoError::File {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, report.to_text()).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(report)
}
