//! One PASS/FAIL line per acceptance criterion. Runs are shared between
//! criteria and computed on first use.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use hcb_core::analysis::{extrapolate_inverse_size, find_velocity_peak};
use hcb_core::fock::{self, FockBasis};
use hcb_core::model::{ModelParams, SparseHamiltonian};
use hcb_core::mps::tebd::{TebdSchedule, TebdStepper};
use hcb_core::mps::{MpsState, Truncation};
use hcb_core::observables::{melt_time, DEFAULT_MELT_THRESHOLD};
use hcb_core::scenario::run::header_lines;
use hcb_core::scenario::{run_scenario, run_sweep, EngineChoice, RunOutcome, SweepOutcome};
use hcb_core::{ScenarioConfig, ScenarioKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const FREE_DENSITY_TOL: f64 = 1e-8;
const MPS_ORACLE_TOL: f64 = 1e-4;
const SQRT2_REL_TOL: f64 = 0.02;
const MELT_TARGET: f64 = 5.0;
const MELT_TOL: f64 = 0.5;
const LIGHT_CONE_SLACK: f64 = 6.0;
const LIGHT_CONE_TOL: f64 = 1e-6;
const MONOTONE_R2: f64 = 0.995;
const PLATEAU_CV: f64 = 0.15;
const PLATEAU_WINDOW: (f64, f64) = (4.0, 10.0);
const EXACT_FIT_TOL: f64 = 1e-12;
const NOISE_TRIALS: usize = 100;
const NOISE_MIN_HITS: usize = 90;
const VC_TARGETS: [(f64, f64); 2] = [(1.0, 0.95), (2.0, 0.30)];
const VC_TOL: f64 = 0.1;
const BALLISTIC_R2: f64 = 0.999;
const TROTTER_RATIO: (f64, f64) = (6.0, 10.0);

// desk-scale MPS settings
const MPS_CHI: usize = 100;
const MPS_EPS: f64 = 1e-4;
const PEAK_CHI: usize = 48;
const PEAK_EPS: f64 = 1e-5;
const PEAK_WINDOW: [f64; 2] = [0.5, 2.5];

type Criterion = (u32, &'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn row_at(o: &RunOutcome, t: f64) -> usize {
    o.series.times.iter().position(|&s| (s - t).abs() < 1e-9).expect("recorded time")
}

fn mi(w: f64, l: usize, n: usize, engine: EngineChoice) -> ScenarioConfig {
    let mut c = ScenarioConfig::new(ScenarioKind::MiExpansion, w, l, n);
    c.engine = engine;
    c
}

fn run(cfg: &ScenarioConfig) -> RunOutcome {
    let o = run_scenario(cfg, None).expect("run");
    assert!(o.integrity.is_empty(), "integrity: {:?}", o.integrity);
    o
}

fn free_180() -> &'static RunOutcome {
    static CELL: OnceLock<RunOutcome> = OnceLock::new();
    CELL.get_or_init(|| run(&mi(0.0, 180, 20, EngineChoice::FreeFermion)))
}

fn oracle_pair() -> &'static (RunOutcome, RunOutcome) {
    static CELL: OnceLock<(RunOutcome, RunOutcome)> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut exact = mi(1.0, 12, 4, EngineChoice::Exact);
        exact.t_max = Some(6.0);
        exact.dt = 0.05;
        let mut mps = exact.clone();
        mps.engine = EngineChoice::Mps;
        mps.chi_max = 256;
        (run(&exact), run(&mps))
    })
}

fn mps_60() -> &'static Vec<RunOutcome> {
    static CELL: OnceLock<Vec<RunOutcome>> = OnceLock::new();
    CELL.get_or_init(|| {
        [0.0, 1.0, 1.6, 2.0]
            .iter()
            .map(|&w| {
                let mut c = mi(w, 60, 10, EngineChoice::Mps);
                c.chi_max = MPS_CHI;
                c.svd_eps = MPS_EPS;
                run(&c)
            })
            .collect()
    })
}

fn n_sweep() -> &'static SweepOutcome {
    static CELL: OnceLock<SweepOutcome> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut c = ScenarioConfig::new(ScenarioKind::Sweep, 1.0, 58, 6);
        c.base = Some(ScenarioKind::MiExpansion);
        c.engine = EngineChoice::Mps;
        c.sweep_w = VC_TARGETS.iter().map(|p| p.0).collect();
        c.sweep_n = vec![6, 10, 14];
        c.pad = Some(26);
        c.t_max = Some(10.0);
        c.chi_max = MPS_CHI;
        c.svd_eps = MPS_EPS;
        run_sweep(&c, None).expect("sweep")
    })
}

fn w_sweep() -> &'static SweepOutcome {
    static CELL: OnceLock<SweepOutcome> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut c = ScenarioConfig::new(ScenarioKind::Sweep, 1.0, 18, 12);
        c.base = Some(ScenarioKind::GsQuench);
        c.engine = EngineChoice::Mps;
        c.sweep_w = (0..=10).map(|k| 1.0 + 0.25 * k as f64).collect();
        c.fit_window = Some(PEAK_WINDOW);
        c.t_max = Some(PEAK_WINDOW[1]);
        c.chi_max = PEAK_CHI;
        c.svd_eps = PEAK_EPS;
        c.dmrg_chi = PEAK_CHI;
        c.dmrg_tol = 1e-9;
        run_sweep(&c, None).expect("sweep")
    })
}

fn free_exactness() -> Verdict {
    let mut free = mi(0.0, 12, 4, EngineChoice::FreeFermion);
    free.t_max = Some(6.0);
    let mut exact = free.clone();
    exact.engine = EngineChoice::Exact;
    let (a, b) = (run(&free), run(&exact));
    let worst = [1.0, 2.0, 4.0, 6.0]
        .iter()
        .map(|&t| max_diff(&a.series.density[row_at(&a, t)], &b.series.density[row_at(&b, t)]))
        .fold(0.0, f64::max);
    verdict(worst <= FREE_DENSITY_TOL, format!("max density error {worst:.2e} <= {FREE_DENSITY_TOL:.0e}"))
}

fn mps_vs_oracle() -> Verdict {
    let (exact, mps) = oracle_pair();
    let (i, k) = (row_at(exact, 6.0), row_at(mps, 6.0));
    let dens = max_diff(&exact.series.density[i], &mps.series.density[k]);
    let cur = (exact.series.half_current[i] - mps.series.half_current[k]).abs();
    verdict(
        dens <= MPS_ORACLE_TOL && cur <= MPS_ORACLE_TOL,
        format!("second order, dt 0.05, chi 256: density error {dens:.2e}, current error {cur:.2e}, bound {MPS_ORACLE_TOL:.0e}"),
    )
}

fn velocity_anchor() -> Verdict {
    let f = free_180().fit.expect("fit");
    let rel = (f.slope / 2f64.sqrt() - 1.0).abs();
    verdict(rel <= SQRT2_REL_TOL, format!("V = {:.5} (r2 {:.5}), |V/sqrt2 - 1| = {rel:.2e} <= {SQRT2_REL_TOL}", f.slope, f.r_squared))
}

fn melt_anchor() -> Verdict {
    match melt_time(&free_180().series, DEFAULT_MELT_THRESHOLD) {
        Some(t) => verdict(
            (t - MELT_TARGET).abs() <= MELT_TOL,
            format!("t_melt = {t:.3} at threshold {DEFAULT_MELT_THRESHOLD}, target {MELT_TARGET} +- {MELT_TOL}"),
        ),
        None => verdict(false, "central density never fell below threshold".into()),
    }
}

fn light_cone() -> Verdict {
    let o = free_180();
    let (i1, i2) = o.config.box_bounds();
    let mut worst = (0.0f64, 0.0, 0usize);
    for (t, d) in o.series.times.iter().zip(&o.series.density) {
        for (k, &x) in d.iter().enumerate() {
            let site = k + 1;
            let dist = if site < i1 { i1 - site } else { site.saturating_sub(i2) } as f64;
            if dist > 2.0 * t + LIGHT_CONE_SLACK && x > worst.0 {
                worst = (x, *t, site);
            }
        }
    }
    verdict(
        worst.0 <= LIGHT_CONE_TOL,
        format!("largest density outside 2t + {LIGHT_CONE_SLACK} is {:.2e} (t = {}, site {}), bound {LIGHT_CONE_TOL:.0e}", worst.0, worst.1, worst.2),
    )
}

fn monotone_velocity() -> Verdict {
    let fits: Vec<_> = mps_60()[..3].iter().map(|o| o.fit.expect("fit")).collect();
    let decreasing = fits.windows(2).all(|p| p[1].slope < p[0].slope);
    let r2 = fits.iter().map(|f| f.r_squared).fold(1.0, f64::min);
    let vs: Vec<String> = fits.iter().map(|f| format!("{:.4}", f.slope)).collect();
    verdict(
        decreasing && r2 >= MONOTONE_R2,
        format!("V(W = 0, 1, 1.6) = [{}], min r2 {r2:.5} >= {MONOTONE_R2}", vs.join(", ")),
    )
}

fn current_plateau() -> Verdict {
    let s = &mps_60()[3].series;
    let cur: Vec<f64> = s
        .times
        .iter()
        .zip(&s.half_current)
        .filter(|(t, _)| **t >= PLATEAU_WINDOW.0 - 1e-9 && **t <= PLATEAU_WINDOW.1 + 1e-9)
        .map(|(_, c)| *c)
        .collect();
    let mean = cur.iter().sum::<f64>() / cur.len() as f64;
    let sd = (cur.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / cur.len() as f64).sqrt();
    let cv = sd / mean;
    verdict(cv.is_finite() && cv <= PLATEAU_CV, format!("W = 2: stdev/mean of J_L/2 = {cv:.4} <= {PLATEAU_CV} ({} records)", cur.len()))
}

fn fitters() -> Verdict {
    let (a, b) = (0.95, -1.7);
    let exact: Vec<(f64, f64)> = [6.0, 10.0, 14.0, 18.0].iter().map(|&n| (n, a + b / n)).collect();
    let e = extrapolate_inverse_size(&exact).expect("fit");
    let exact_err = (e.limit_value - a).abs().max((e.coefficient - b).abs());

    let (wc, c) = (2.74, -9.0);
    let peaks: Vec<(f64, f64)> = [12.0, 18.0, 24.0].iter().map(|&l| (l, wc + c / l)).collect();
    let p = extrapolate_inverse_size(&peaks).expect("fit");
    let peak_err = (p.limit_value - wc).abs().max((p.coefficient - c).abs());

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let sizes: Vec<f64> = (0..30).map(|k| 6.0 + 2.0 * k as f64).collect();
    let hits = (0..NOISE_TRIALS)
        .filter(|_| {
            let pts: Vec<(f64, f64)> = sizes.iter().map(|&n| (n, a + b / n + noise.sample(&mut rng))).collect();
            let e = extrapolate_inverse_size(&pts).expect("fit");
            (e.limit_value - a).abs() <= 2.0 * e.limit_stderr
        })
        .count();

    let mut curve: Vec<(f64, f64)> = (0..11).map(|k| {
        let w = 1.0 + 0.25 * k as f64;
        (w, 1.0 - 0.2 * (w - 2.1).powi(2))
    }).collect();
    let (w0, _) = find_velocity_peak(&curve).expect("peak");
    curve.iter_mut().for_each(|p| p.1 += 3.0);
    let (w1, _) = find_velocity_peak(&curve).expect("peak");

    let pass = exact_err <= EXACT_FIT_TOL && peak_err <= EXACT_FIT_TOL && hits >= NOISE_MIN_HITS && (w0 - 2.1).abs() <= EXACT_FIT_TOL && (w0 - w1).abs() <= EXACT_FIT_TOL;
    verdict(
        pass,
        format!(
            "noiseless errors {exact_err:.1e}, {peak_err:.1e} <= {EXACT_FIT_TOL:.0e}; {hits}/{NOISE_TRIALS} noisy limits within 2 SE (need {NOISE_MIN_HITS}); parabola peak {w0:.12}"
        ),
    )
}

fn extrapolation() -> Verdict {
    let s = n_sweep();
    let mut pass = !s.partial;
    let mut parts = Vec::new();
    for (w, target) in VC_TARGETS {
        let label = format!("velocity vs n at w = {w}");
        let e = s.extrapolations.iter().find(|(l, _)| *l == label).and_then(|(_, r)| r.as_ref().ok());
        match e {
            Some(e) => {
                let ok = (e.limit_value - target).abs() <= VC_TOL;
                pass &= ok;
                let vs: Vec<String> = e.inputs.iter().map(|(n, v)| format!("{n}:{v:.4}")).collect();
                parts.push(format!(
                    "W = {w}: V_c = {:.4} +- {:.4} (target {target} +- {VC_TOL}, {}) [{}]",
                    e.limit_value,
                    e.limit_stderr,
                    if ok { "ok" } else { "off" },
                    vs.join(" ")
                ));
            }
            None => {
                pass = false;
                parts.push(format!("W = {w}: no extrapolation"));
            }
        }
    }
    verdict(pass, parts.join("; "))
}

fn ballistic_gs_quench() -> Verdict {
    let mut c = ScenarioConfig::new(ScenarioKind::GsQuench, 1.0, 12, 8);
    c.engine = EngineChoice::Exact;
    c.fit_window = Some([2.0, 6.0]);
    let f = run(&c).fit.expect("fit");
    verdict(
        f.r_squared >= BALLISTIC_R2,
        format!("radius fit on [2, 6]: slope {:.4}, r2 {:.4} >= {BALLISTIC_R2}", f.slope, f.r_squared),
    )
}

fn peak_existence() -> Verdict {
    let s = w_sweep();
    let vs: Vec<String> = s.points.iter().map(|p| format!("{}:{:.4}", p.point.w, p.velocity().unwrap_or(f64::NAN))).collect();
    match s.peaks.first() {
        Some((_, Ok((w, v)))) if !s.partial => verdict(true, format!("interior peak at W = {w:.3}, V = {v:.4}; window {PEAK_WINDOW:?} [{}]", vs.join(" "))),
        Some((_, Err(e))) => verdict(false, format!("{e} [{}]", vs.join(" "))),
        _ => verdict(false, format!("partial sweep [{}]", vs.join(" "))),
    }
}

fn all_runs() -> Vec<&'static RunOutcome> {
    let mut runs = vec![free_180(), &oracle_pair().0, &oracle_pair().1];
    runs.extend(mps_60());
    for s in [n_sweep(), w_sweep()] {
        runs.extend(s.points.iter().filter_map(|p| p.outcome.as_ref().ok()));
    }
    runs
}

fn trotter_ratio() -> f64 {
    let params = ModelParams::new(1.0, 1.0, 12).unwrap();
    let basis = Arc::new(FockBasis::new(12, 4).unwrap());
    let psi = fock::box_state(&basis, 5, 8).unwrap();
    let h = SparseHamiltonian::build(&params, &basis).unwrap();
    let err = |dt: f64| {
        let mut m = MpsState::box_state(12, 5, 8, Truncation::exact()).unwrap();
        TebdStepper::new(&params, TebdSchedule::new(dt)).step(&mut m).unwrap();
        let exact = fock::evolve_dense(&psi, &h, dt).unwrap().to_full_space();
        let got = m.to_full_space().unwrap();
        got.iter().zip(&exact).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    };
    err(0.1) / err(0.05)
}

fn conservation() -> Verdict {
    let runs = all_runs();
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_norm = f64::NEG_INFINITY;
    for o in &runs {
        let n = o.series.meta.n as f64;
        for (total, dw) in o.series.total_n.iter().zip(&o.series.discarded_weight) {
            worst_excess = worst_excess.max((total - n).abs() - (1e-8 + 10.0 * dw));
        }
        if let Some(s) = o.step_stats {
            let tol = 1e-8 + 10.0 * o.series.discarded_weight.last().copied().unwrap_or(0.0);
            worst_norm = worst_norm.max(s.max_norm_drift.max(s.max_gauge_drift) - tol);
        }
    }

    let params = ModelParams::new(1.0, 1.0, 30).unwrap();
    let mut m = MpsState::box_state(30, 11, 20, Truncation { chi_max: 24, svd_eps: 1e-6 }).unwrap();
    let stepper = TebdStepper::new(&params, TebdSchedule::new(0.1));
    let mut worst_step = 0.0f64;
    for _ in 0..40 {
        stepper.step(&mut m).unwrap();
        worst_step = worst_step.max((m.norm() - 1.0).abs());
    }

    let ratio = trotter_ratio();
    let pass = worst_excess <= 0.0 && worst_norm <= 0.0 && worst_step <= 1e-8 && (TROTTER_RATIO.0..=TROTTER_RATIO.1).contains(&ratio);
    verdict(
        pass,
        format!(
            "{} runs: number drift excess {worst_excess:.1e} <= 0, norm drift excess {worst_norm:.1e} <= 0, per-step norm drift {worst_step:.1e} <= 1e-8; Trotter ratio {ratio:.3} in [{}, {}]",
            runs.len(),
            TROTTER_RATIO.0,
            TROTTER_RATIO.1
        ),
    )
}

fn csv_bytes(cfg: &ScenarioConfig) -> Vec<u8> {
    let o = run(cfg);
    let mut v = Vec::new();
    o.series.write_csv(&mut v, &header_lines(&o.config)).unwrap();
    v
}

fn determinism() -> Verdict {
    let mut mps = mi(1.0, 16, 6, EngineChoice::Mps);
    mps.chi_max = 32;
    mps.t_max = Some(4.0);
    let mut exact = mi(1.0, 12, 4, EngineChoice::Exact);
    exact.t_max = Some(4.0);
    let free = mi(0.0, 40, 8, EngineChoice::FreeFermion);
    let mut same = Vec::new();
    for c in [&free, &exact, &mps] {
        let (a, b) = (csv_bytes(c), csv_bytes(c));
        same.push((c.engine.as_str(), a == b && !a.is_empty()));
    }
    let detail: Vec<String> = same.iter().map(|(e, s)| format!("{e}: {}", if *s { "identical" } else { "differs" })).collect();
    verdict(same.iter().all(|s| s.1), detail.join(", "))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 13] = [
        (1, "free-fermion exactness", free_exactness),
        (2, "MPS vs exact oracle", mps_vs_oracle),
        (3, "velocity anchor", velocity_anchor),
        (4, "melt time", melt_anchor),
        (5, "light cone", light_cone),
        (6, "monotone V(W)", monotone_velocity),
        (7, "current plateau", current_plateau),
        (8, "fitters", fitters),
        (9, "size extrapolation", extrapolation),
        (10, "gs-quench ballistic radius", ballistic_gs_quench),
        (11, "gs-quench velocity peak", peak_existence),
        (12, "conservation", conservation),
        (13, "determinism", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = Vec::new();
    for (id, name, check) in criteria {
        let start = Instant::now();
        let v = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} {id:>2} {name}: {} [{:.1}s]", v.detail, start.elapsed().as_secs_f64());
        if !v.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 13 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} of 13 criteria fail: {failed:?}", failed.len());
        ExitCode::FAILURE
    }
}
