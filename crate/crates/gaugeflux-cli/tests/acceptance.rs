//! The thirteen acceptance criteria, one line each.

use std::process::Command;
use std::time::{Duration, Instant};

use gaugeflux_cli::suites::run_suite;
use gaugeflux_cli::{Bound, Check, SuiteConfig};

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome { ok, detail: detail.into() }
}

/// All checks of `suite` whose name starts with one of `prefixes`, each passing
/// at a tolerance no looser than `tol` (upper bounds) or no lower than `tol`
/// (lower bounds).
fn criterion(checks: &[Check], suite: &str, prefixes: &[&str], tol: f64, expected: usize) -> Outcome {
    let picked: Vec<&Check> = checks
        .iter()
        .filter(|c| c.suite == suite && prefixes.iter().any(|p| c.name.starts_with(p)))
        .collect();
    let mut worst = String::new();
    let mut ok = picked.len() >= expected;
    for c in &picked {
        let strict = match c.bound {
            Bound::Upper => c.tolerance <= tol,
            Bound::Lower => c.tolerance >= tol,
        };
        if !(c.pass && strict) {
            ok = false;
            worst = format!("; {} measured {:e} vs {:e}", c.name, c.measured, c.tolerance);
        }
    }
    let max = picked.iter().filter(|c| c.bound == Bound::Upper).map(|c| c.measured).fold(0.0, f64::max);
    outcome(ok, format!("{} checks, max {max:.2e}{worst}", picked.len()))
}

fn all(parts: Vec<Outcome>) -> Outcome {
    let ok = parts.iter().all(|p| p.ok);
    outcome(ok, parts.into_iter().map(|p| p.detail).collect::<Vec<_>>().join(" | "))
}

fn run(suite: &str, cfg: &SuiteConfig) -> Vec<Check> {
    run_suite(suite, cfg).unwrap_or_else(|e| panic!("{suite}: {e}"))
}

fn main() {
    let cfg = SuiteConfig::default();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();

    let start = Instant::now();
    let cov = run("covariance", &cfg);
    let cov_time = start.elapsed();
    results.push((
        1,
        "gauge covariance of the field strength",
        all(vec![
            criterion(&cov, "covariance", &["field-strength-covariance"], 1e-10, 1),
            outcome(cov_time < Duration::from_secs(10), format!("{:.2} s", cov_time.as_secs_f64())),
        ]),
    ));
    results.push((2, "right group action composes", criterion(&cov, "covariance", &["group-action-composes"], 1e-11, 1)));

    let el = run("el-equivalence", &cfg);
    results.push((
        3,
        "equivalence of the residual systems",
        criterion(&el, "el-equivalence", &["real-holomorphic-relation/", "dagger-relation/"], 1e-8, 8),
    ));
    results.push((
        4,
        "realness of the matter Lagrangians",
        all(vec![
            criterion(
                &el,
                "el-equivalence",
                &["realness-integral/dirac", "realness-integral/gauge-density", "realness-integral/schrodinger"],
                1e-9,
                3,
            ),
            criterion(&el, "el-equivalence", &["realness-pointwise/second-order"], 1e-12, 1),
            criterion(&el, "el-equivalence", &["realness-slack-order/"], 1.9, 1),
        ]),
    ));

    let gel = run("gauge-el", &cfg);
    results.push((
        5,
        "free gauge equations",
        all(vec![
            criterion(&gel, "gauge-el", &["variants-agree/"], 1e-9, 4),
            criterion(&gel, "gauge-el", &["quadratic-closed-form/"], 1e-9, 4),
        ]),
    ));

    let mx = run("maxwell", &cfg);
    results.push((
        6,
        "Maxwell in potentials",
        all(vec![
            criterion(
                &mx,
                "maxwell",
                &["minkowski-equals-potential-form", "wave-potential-residual", "wave-lorenz", "wave-homogeneous-equations"],
                1e-10,
                4,
            ),
            criterion(&mx, "maxwell", &["gauge-shift-keeps-fields"], 1e-11, 1),
        ]),
    ));

    let mut onshell = Vec::new();
    let mut offshell = Vec::new();
    for kind in gaugeflux::noether::FluxKind::ALL {
        let suite = format!("noether-{}", kind.name());
        let checks = run(&suite, &cfg);
        if ["current", "translation", "internal"].contains(&kind.name()) {
            onshell.push(criterion(&checks, &suite, &["onshell-divergence"], 1e-4, 1));
            onshell.push(criterion(&checks, &suite, &["offshell-divergence-control"], 1e-2, 1));
        }
        let order_ok = checks.iter().filter(|c| c.name.starts_with("offshell-identity/")).all(|c| c.min_order.unwrap_or(0.0) >= 1.9);
        let mut o = criterion(&checks, &suite, &["offshell-identity/"], f64::INFINITY, 10);
        o.ok &= order_ok;
        offshell.push(o);
    }
    results.push((7, "on-shell conservation on the Dirac oracle", all(onshell)));
    results.push((8, "off-shell identity for all flux kinds", all(offshell)));

    let ext = run("extensions", &cfg);
    results.push((
        9,
        "local gauge invariance of the extension",
        all(vec![
            criterion(&ext, "extensions", &["local-invariance/"], 1e-10, 2),
            criterion(&ext, "extensions", &["non-invariant-control"], 1e-4, 1),
        ]),
    ));

    let tr = run("trace-identities", &cfg);
    results.push((
        10,
        "trace identities",
        all(vec![
            criterion(&tr, "trace-identities", &[""], 1e-12, 3),
            outcome(cfg.samples >= 1000, format!("{} samples per size", cfg.samples)),
        ]),
    ));

    let pr = run("projections", &cfg);
    results.push((
        11,
        "projection algebra",
        all(vec![
            criterion(&pr, "projections", &["dagger", "real-adjoint", "qj-fixes", "qj-projects", "qj-equals", "qj-kernel", "qj-orthogonal"], 1e-10, 8),
            criterion(&pr, "projections", &["qj-not-"], 1e-6, 2),
        ]),
    ));

    let st = run("stacked-gauge", &cfg);
    results.push((12, "stacked-potential route to the gauge equations", criterion(&st, "stacked-gauge", &["stacked-equals-gauge-equation"], 1e-8, 1)));

    let bin = env!("CARGO_BIN_EXE_gaugeflux");
    let verify_all = || {
        let t = Instant::now();
        let out = Command::new(bin).args(["verify", "all", "--workers", "1"]).output().expect("runs the binary");
        (out, t.elapsed())
    };
    let (first, elapsed) = verify_all();
    let (second, _) = verify_all();
    results.push((
        13,
        "`verify all` in time and byte-deterministic",
        outcome(
            first.status.success() && elapsed < Duration::from_secs(300) && first.stdout == second.stdout,
            format!("exit {:?}, {:.1} s, identical {}", first.status.code(), elapsed.as_secs_f64(), first.stdout == second.stdout),
        ),
    ));

    let mut failed = 0;
    for (n, what, o) in &results {
        println!("criterion {n:>2} {}: {what} ({})", if o.ok { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.ok);
    }
    println!("acceptance: {} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
