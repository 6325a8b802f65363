//! Acceptance run: one line per criterion, written straight to stderr so it
//! shows up without `--nocapture`.

use std::io::Write;
use std::process::Command;
use std::time::Instant;

use spatial_extremes::cluster::{
    check_anticluster, empirical_cluster_laplace, limit_cluster_laplace_mc, sample_nonempty_clusters,
};
use spatial_extremes::index::{
    br_theta_block_mc, mixture_theta, mma_theta_closed_form, theta_classical_empirical, theta_run_empirical, Exact,
    ThetaTarget,
};
use spatial_extremes::index::{exact_to_f64, level_u};
use spatial_extremes::lattice::{CornerIndex, InvariantOrder, LatticePoint, Window};
use spatial_extremes::model::{MmaWeights, ModelSpec, VariogramSpec};
use spatial_extremes::rng::RngStream;
use spatial_extremes::stats::Estimate;
use spatial_extremes::tailfield::{br_tail_fdd_mc, br_tail_marginal_cdf, estimate_tail_field, TailFieldBatch};
use spatial_extremes::testfn::{PointFunction, CATALOG};
use spatial_extremes::verify::{run_campaign, run_counterexample_check, VerifyOptions};

const RUN_TOL: f64 = 0.03;
const CLASSICAL_TOL: f64 = 0.03;
const KS_MAX: f64 = 0.02;
const MIN_EXCEEDANCES: u64 = 5000;
const Z_MAX: f64 = 3.0;
const SEPARATION_MIN: f64 = 5.0;
const ANTICLUSTER_ZERO: f64 = 0.05;
// 2 Phi(-1)
const TWO_PHI_MINUS_ONE: f64 = 0.31731;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn p(v: [i64; 2]) -> LatticePoint {
    LatticePoint(v.to_vec())
}

fn weights(a: [f64; 4]) -> MmaWeights {
    MmaWeights::new(a).unwrap()
}

fn corner(bits: [u8; 2]) -> CornerIndex {
    CornerIndex::new(bits.to_vec()).unwrap()
}

fn tail_batch(spec: &ModelSpec, radius: i64, k: u64, seed: u64) -> TailFieldBatch {
    let q: f64 = 1.0 - 1e-14;
    let n = ((k + 1) as f64 / (1.0 - q)).ceil() as u64;
    let lags = Window::centered(2, radius).unwrap();
    estimate_tail_field(spec, spec.alpha(), &lags, q, n, &RngStream::new(seed)).unwrap()
}

fn exact_table() -> Verdict {
    let a = weights([0.1, 0.7, 0.6, 0.1]);
    let cl = mma_theta_closed_form(&a, &ThetaTarget::Classical).unwrap();
    let want = [([0, 0], Exact::new(16, 25)), ([1, 1], Exact::new(11, 25)), ([0, 1], Exact::new(2, 5)), ([1, 0], Exact::new(3, 5))];
    let mut ok = cl == Exact::new(2, 5);
    let mut got = vec![format!("cl={cl}")];
    for (c, w) in want {
        let v = mma_theta_closed_form(&a, &ThetaTarget::Corner(corner(c))).unwrap();
        ok &= v == w;
        got.push(format!("{}={v}", corner(c)));
    }
    verdict(ok, got.join(" "))
}

fn mixture_table() -> Verdict {
    let m = mixture_theta(&[(0.5, weights([0.1, 0.7, 0.6, 0.1])), (0.5, weights([0.6, 0.2, 0.6, 0.1]))]).unwrap();
    let want = [([0, 0], Exact::new(52, 100)), ([1, 1], Exact::new(42, 100)), ([0, 1], Exact::new(56, 100)), ([1, 0], Exact::new(70, 100))];
    let mut ok = m.classical == Exact::new(2, 5);
    let mut got = vec![format!("cl={}", m.classical)];
    for (c, w) in want {
        let v = m.corners.iter().find(|(k, _)| *k == corner(c)).unwrap().1;
        ok &= v == w;
        got.push(format!("{}={v}", corner(c)));
    }
    verdict(ok, got.join(" "))
}

fn run_indices() -> Verdict {
    let start = Instant::now();
    let a = weights([0.1, 0.7, 0.6, 0.1]);
    let mma = ModelSpec::mma(a.0).unwrap();
    let s = RngStream::new(3);
    let mut ok = true;
    let mut got = Vec::new();
    for (i, c) in CornerIndex::all(2).into_iter().enumerate() {
        let e = theta_run_empirical(&mma, &c, &p([20, 20]), &p([400, 400]), 1.0, 2500, &s.child(i as u64)).unwrap();
        let want = exact_to_f64(&mma_theta_closed_form(&a, &ThetaTarget::Corner(c.clone())).unwrap());
        ok &= (e.value - want).abs() <= RUN_TOL;
        got.push(format!("{c}={:.3}±{:.3} (exact {want})", e.value, e.se));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs <= 300.0;
    verdict(ok, format!("{} in {secs:.1}s", got.join(" ")))
}

fn classical_indices() -> Verdict {
    let mma = ModelSpec::mma([0.1, 0.7, 0.6, 0.1]).unwrap();
    let e1 = theta_classical_empirical(&mma, &p([200, 200]), 1.0, 10_000, &RngStream::new(4)).unwrap();
    let iid = ModelSpec::IIDFrechet { alpha: 1.0 };
    let e2 = theta_classical_empirical(&iid, &p([100, 100]), 1.0, 20_000, &RngStream::new(5)).unwrap();
    let ok = (e1.value - 0.4).abs() <= CLASSICAL_TOL && (e2.value - 1.0).abs() <= CLASSICAL_TOL;
    verdict(ok, format!("mma {:.3}±{:.3}, iid {:.3}±{:.3}", e1.value, e1.se, e2.value, e2.se))
}

fn ks_pareto(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = if x <= 1.0 { 0.0 } else { 1.0 - 1.0 / x };
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    d
}

fn pareto_root() -> Verdict {
    let mut ok = true;
    let mut got = Vec::new();
    for (i, m) in ["iid", "mma-default", "br-fbm"].iter().enumerate() {
        let b = tail_batch(&ModelSpec::preset(m).unwrap(), 1, MIN_EXCEEDANCES, 6 + i as u64);
        let roots: Vec<f64> = b.samples.iter().map(|s| s.root_norm).collect();
        let d = ks_pareto(&roots);
        ok &= d <= KS_MAX && roots.len() as u64 >= MIN_EXCEEDANCES;
        got.push(format!("{m} KS={d:.4} (n={})", roots.len()));
    }
    verdict(ok, got.join(", "))
}

fn br_marginal() -> Verdict {
    let v = VariogramSpec::AdditiveFBM { hurst: vec![0.5, 0.5] };
    // gamma(t) = |t_1| + |t_2|
    let pairs = [([2, 2], 1.0), ([1, 0], 0.5), ([3, 6], 2.0)];
    let mut ok = (1.0 - br_tail_marginal_cdf(4.0, 1.0) - TWO_PHI_MINUS_ONE).abs() < 1e-5;
    let mut got = vec![format!("P(Y>1 | gamma=4)={:.5}", 1.0 - br_tail_marginal_cdf(4.0, 1.0))];
    for (i, (t, y)) in pairs.into_iter().enumerate() {
        let t = p(t);
        let gamma = v.gamma(&t.0);
        let exact = br_tail_marginal_cdf(gamma, y);
        let e = br_tail_fdd_mc(std::slice::from_ref(&t), &[y], &v, 100_000, &RngStream::new(8).child(i as u64)).unwrap();
        let z = e.z_distance(&Estimate::exact(exact));
        ok &= z <= Z_MAX;
        got.push(format!("(gamma={gamma},y={y}) z={z:.2}"));
    }
    verdict(ok, got.join(", "))
}

fn hurst_grid() -> Verdict {
    let start = Instant::now();
    let grid = [0.25, 0.5, 0.75];
    let o = InvariantOrder::lexicographic(2);
    let s = RngStream::new(9);
    let mut th = [[Estimate::exact(0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let v = VariogramSpec::AdditiveFBM { hurst: vec![grid[i], grid[j]] };
            th[i][j] = br_theta_block_mc(&v, 50, &o, 20_000, &s).unwrap();
        }
    }
    let mut ok = true;
    let mut max_swap: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            if i + 1 < 3 {
                ok &= th[i + 1][j].value > th[i][j].value;
            }
            if j + 1 < 3 {
                ok &= th[i][j + 1].value > th[i][j].value;
            }
            max_swap = max_swap.max(th[i][j].z_distance(&th[j][i]));
        }
    }
    ok &= max_swap <= Z_MAX;
    let secs = start.elapsed().as_secs_f64();
    ok &= secs <= 900.0;
    verdict(
        ok,
        format!(
            "theta_b from {:.4} to {:.4}, max swap z={max_swap:.2}, {secs:.1}s",
            th[0][0].value, th[2][2].value
        ),
    )
}

fn counterexample() -> Verdict {
    let ranks: Vec<u64> = (20..=41).collect();
    let (run, rows) = run_counterexample_check(1.0, &ranks, 20_000, 10).unwrap();
    let mean = |odd: bool| {
        let g: Vec<f64> = rows.iter().filter(|r| (r.rank % 2 == 1) == odd).map(|r| r.estimate.value).collect();
        g.iter().sum::<f64>() / g.len() as f64
    };
    let sep = run.checks.iter().find(|c| c.id.contains("separation")).unwrap().statistic;
    verdict(
        run.passed() && sep >= SEPARATION_MIN,
        format!("odd {:.3}, even {:.3}, separation {sep:.0} se", mean(true), mean(false)),
    )
}

fn identities() -> Verdict {
    let opts = VerifyOptions::default();
    let mut ok = true;
    let mut got = Vec::new();
    for m in ["iid", "mma-default"] {
        for c in ["change-of-time", "rs-invariance"] {
            let run = run_campaign(c, &ModelSpec::preset(m).unwrap(), &opts, 11).unwrap();
            ok &= run.passed();
            got.push(format!("{m}/{c} {}", if run.passed() { "pass" } else { "fail" }));
        }
    }
    let bad = VerifyOptions { scale: 2.0, ..opts };
    for c in ["change-of-time", "rs-invariance"] {
        let run = run_campaign(c, &ModelSpec::preset("mma-default").unwrap(), &bad, 11).unwrap();
        ok &= !run.passed();
        got.push(format!("control/{c} {}", if run.passed() { "accepted" } else { "rejected" }));
    }
    verdict(ok, got.join(", "))
}

fn cluster_cross_method() -> Verdict {
    let mma = ModelSpec::mma([0.1, 0.7, 0.6, 0.1]).unwrap();
    let u = level_u(&mma, &p([1000, 1000]), 1.0).unwrap();
    let clusters = sample_nonempty_clusters(&mma, &p([200, 200]), u, 3000, &RngStream::new(12)).unwrap();
    let spectral = tail_batch(&mma, 6, 10_000, 13).spectral();
    let o = InvariantOrder::lexicographic(2);
    let zero_lim = limit_cluster_laplace_mc(&spectral, &PointFunction::Zero, 1.0, &o, None, 16).unwrap();
    let zero_emp = empirical_cluster_laplace(&clusters, &PointFunction::Zero).unwrap();
    let mut ok = zero_lim.estimate.value == 1.0 && zero_emp.value == 1.0;
    let mut got = vec![format!("Psi(0)={}", zero_lim.estimate.value)];
    for id in CATALOG {
        let f = PointFunction::catalog(id).unwrap();
        let emp = empirical_cluster_laplace(&clusters, &f).unwrap();
        let lim = limit_cluster_laplace_mc(&spectral, &f, 1.0, &o, None, 16).unwrap();
        let z = emp.z_distance(&lim.estimate);
        ok &= z <= Z_MAX;
        got.push(format!("{id} {:.3}/{:.3} z={z:.2}", emp.value, lim.estimate.value));
    }
    verdict(ok, got.join(", "))
}

fn anticluster() -> Verdict {
    let mma = ModelSpec::mma([0.1, 0.7, 0.6, 0.1]).unwrap();
    let rows =
        check_anticluster(&mma, &p([10, 10]), 1.0, &[1, 2, 3], 4000, &p([1000, 1000]), &RngStream::new(14)).unwrap();
    let at = |m: i64| rows.iter().find(|r| r.m == m).unwrap().probability;
    let (m2, m3) = (at(2), at(3));
    // decay does happen, one step later than stated
    assert!(m3.value <= ANTICLUSTER_ZERO, "M=3: {m3:?}");
    let br = ModelSpec::preset("br-stationary").unwrap();
    let rows = check_anticluster(&br, &p([6, 6]), 1.0, &[1, 3, 5], 2000, &p([100, 100]), &RngStream::new(15)).unwrap();
    let floor_ok = rows
        .iter()
        .all(|r| r.probability.value >= TWO_PHI_MINUS_ONE - Z_MAX * r.probability.se);
    assert!(floor_ok, "stationary Brown–Resnick profile fell below 2 Phi(-1): {rows:?}");
    let min_br = rows.iter().map(|r| r.probability.value).fold(1.0, f64::min);
    verdict(
        m2.value <= ANTICLUSTER_ZERO && floor_ok,
        format!(
            "mma M=2 {:.3}±{:.3} (expected ~0), M=3 {:.3}; br-stationary min {min_br:.3} >= {TWO_PHI_MINUS_ONE}",
            m2.value, m2.se, m3.value
        ),
    )
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let runs: [&[&str]; 5] = [
        &["mma-theta", "--empirical", "--replicates", "300"],
        &["br-fig1", "--n-mc", "2000", "--truncation", "10"],
        &["tailfield", "--replicates", "200000", "--format", "json"],
        &["cluster-laplace", "--n", "400,400", "--r", "80,80", "--replicates", "300", "--n-mc", "500"],
        &["verify", "rs-invariance", "--model", "mma-default"],
    ];
    let mut ok = true;
    let mut bytes = 0;
    for args in runs {
        let mut seen: Option<Vec<u8>> = None;
        for threads in ["1", "3", "1"] {
            let status = Command::new(env!("CARGO_BIN_EXE_spext"))
                .args(args)
                .args(["--seed", "21", "--threads", threads, "--out"])
                .arg(&out)
                .status()
                .unwrap();
            ok &= status.success();
            let b = std::fs::read(&out).unwrap();
            match &seen {
                None => {
                    bytes += b.len();
                    seen = Some(b);
                }
                Some(s) => ok &= *s == b,
            }
        }
    }
    verdict(ok, format!("5 commands x threads 1,3,1, {bytes} bytes compared"))
}

/// Criteria that are implemented as stated but do not hold; see the notes
/// printed with them.
const KNOWN_FAILING: [usize; 1] = [11];

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Verdict); 12] = [
        ("exact single-model index table", exact_table),
        ("exact mixture index table", mixture_table),
        ("run indices agree with closed forms", run_indices),
        ("classical index for MMA and IID", classical_indices),
        ("Pareto root of the tail field", pareto_root),
        ("Brown–Resnick marginal oracle", br_marginal),
        ("Hurst grid monotone and symmetric", hurst_grid),
        ("counterexample odd/even separation", counterexample),
        ("change-of-time and RS identities", identities),
        ("cluster Laplace cross-method", cluster_cross_method),
        ("anti-clustering profile", anticluster),
        ("byte-identical output across thread counts", determinism),
    ];
    let mut err = std::io::stderr();
    let mut unexpected = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        let v = check();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        writeln!(err, "acceptance {id:>2} {tag} {name}: {}", v.detail).unwrap();
        if !v.pass && !KNOWN_FAILING.contains(&id) {
            unexpected.push(id);
        }
        if v.pass && KNOWN_FAILING.contains(&id) {
            writeln!(err, "acceptance {id:>2} now passes; drop it from KNOWN_FAILING").unwrap();
        }
    }
    if KNOWN_FAILING.contains(&11) {
        writeln!(
            err,
            "acceptance 11 note: the MMA stencil has radius 1 but two sites driven by one noise variable \
             can be 2 apart, so with R_M = [-M+1, M-1] the profile is ~0.56 at M=2 and 0 from M=3"
        )
        .unwrap();
    }
    assert!(unexpected.is_empty(), "criteria failed: {unexpected:?}");
}
