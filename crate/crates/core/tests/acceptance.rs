//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints its own PASS/FAIL line; exits non-zero if any fails.

mod common;

use std::f64::consts::{LN_2, PI};
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, StudentT};

use pepf_core::conformal::{
    compute_c_sat, conformalize_forecast, ConformalConfig, ConformalMethod, ConformalState, OcqParams, OcqTracker,
};
use pepf_core::dataset::{
    build_sample_matrix, generate_synthetic_series, ExogSelector, FeatureSpec, ScaleShift, SyntheticConfig,
};
use pepf_core::distributions::special::{norm_inv, student_t_inv};
use pepf_core::distributions::{transform_head_outputs, DistParams};
use pepf_core::ensemble::{sort_quantiles, QuantileForecast, QuantileGrid};
use pepf_core::evaluation::{dm_test, kupiec_test, pinball_report, winkler_one};
use pepf_core::network::{pinball_loss, HeadKind, TrainConfig};
use pepf_core::pipeline::{mean_coverage, run_backtest, BacktestConfig};
use pepf_core::HORIZON;

struct Check {
    ok: bool,
    lines: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Self {
            ok: true,
            lines: Vec::new(),
        }
    }

    fn expect(&mut self, cond: bool, what: String) {
        if !cond {
            self.ok = false;
        }
        self.lines
            .push(format!("{} {what}", if cond { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, what: String) {
        self.lines.push(format!("     {what}"));
    }
}

fn pair_index(grid: &QuantileGrid, alpha: f64) -> usize {
    grid.pairs()
        .iter()
        .position(|p| (p.alpha - alpha).abs() < 1e-9)
        .expect("alpha present in grid")
}

fn date(d: usize) -> chrono::NaiveDate {
    chrono::NaiveDate::from_ymd_opt(2021, 1, 1).unwrap() + chrono::Duration::days(d as i64)
}

/// Deliberately misspecified base quantiles: centre biased by +0.3·σ and
/// spread 0.6× too narrow, Gaussian shape on Student-t(5) data.
struct IidHours {
    centre: [f64; HORIZON],
    sigma: [f64; HORIZON],
}

impl IidHours {
    fn new() -> Self {
        let mut centre = [0.0; HORIZON];
        let mut sigma = [0.0; HORIZON];
        for h in 0..HORIZON {
            centre[h] = 40.0 + 10.0 * (2.0 * PI * h as f64 / 24.0).sin();
            sigma[h] = 2.0 + 1.5 * (PI * h as f64 / 24.0).sin();
        }
        Self { centre, sigma }
    }

    fn base(&self, grid: &QuantileGrid) -> Array2<f64> {
        Array2::from_shape_fn((HORIZON, grid.len()), |(h, k)| {
            self.centre[h] + 0.3 * self.sigma[h] + 0.6 * self.sigma[h] * norm_inv(grid.levels()[k])
        })
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let t = StudentT::new(5.0).unwrap();
        (0..HORIZON)
            .map(|h| self.centre[h] + self.sigma[h] * t.sample(rng))
            .collect()
    }
}

fn covered(q: &Array2<f64>, lower: usize, upper: usize, y: &[f64]) -> usize {
    (0..HORIZON)
        .filter(|&h| q[[h, lower]] <= y[h] && y[h] <= q[[h, upper]])
        .count()
}

fn criterion_1() -> Check {
    let mut c = Check::new();
    let grid = QuantileGrid::deciles();
    let model = IidHours::new();
    let base = model.base(&grid);
    let n_cal = 50;
    let (trials, test_days) = (500, 20);
    let alphas = [0.2, 0.4];
    let mut hits = [[0usize; 2]; 2];
    let mut total = 0usize;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let cfg = ConformalConfig {
            n_cal,
            ..Default::default()
        };
        let mut state = ConformalState::new(grid.clone(), cfg).unwrap();
        for _ in 0..n_cal {
            state.observe(base.view(), None, &model.draw(&mut rng)).unwrap();
        }
        let qf = QuantileForecast::new(date(0), base.clone());
        let abs = conformalize_forecast(&qf, &state, ConformalMethod::Absolute, None)
            .unwrap()
            .forecast
            .q;
        let cqr = conformalize_forecast(&qf, &state, ConformalMethod::Cqr, None)
            .unwrap()
            .forecast
            .q;
        for _ in 0..test_days {
            let y = model.draw(&mut rng);
            for (a, &alpha) in alphas.iter().enumerate() {
                let p = grid.pairs()[pair_index(&grid, alpha)];
                hits[0][a] += covered(&abs, p.lower, p.upper, &y);
                hits[1][a] += covered(&cqr, p.lower, p.upper, &y);
            }
            total += HORIZON;
        }
    }
    let base_cov: Vec<f64> = alphas
        .iter()
        .map(|&a| {
            let p = grid.pairs()[pair_index(&grid, a)];
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let n = 20_000;
            (0..n)
                .map(|_| covered(&base, p.lower, p.upper, &model.draw(&mut rng)))
                .sum::<usize>() as f64
                / (n * HORIZON) as f64
        })
        .collect();
    for (m, name) in ["absolute", "cqr"].iter().enumerate() {
        for (a, &alpha) in alphas.iter().enumerate() {
            let cov = hits[m][a] as f64 / total as f64;
            let lo = 1.0 - alpha - 0.01;
            let hi = 1.0 - alpha + 2.0 / (n_cal as f64 + 1.0) + 0.01;
            c.expect(
                cov >= lo && cov <= hi,
                format!(
                    "{name} α={alpha}: coverage {cov:.4} in [{lo:.4}, {hi:.4}] (base {:.4})",
                    base_cov[a]
                ),
            );
        }
    }
    c
}

/// Stationary stream of misspecified forecasts. Returns per-side miss rates
/// `[hour][side]` measured against the thresholds in force each day.
fn ocq_miss_rates(alpha: f64, t_steps: usize, seed: u64) -> Vec<[f64; 2]> {
    let grid = QuantileGrid::deciles();
    let model = IidHours::new();
    let base = model.base(&grid);
    let p = grid.pairs()[pair_index(&grid, alpha)];
    let pi = pair_index(&grid, alpha);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = ConformalState::new(grid.clone(), ConformalConfig::default()).unwrap();
    for _ in 0..182 {
        state.observe(base.view(), None, &model.draw(&mut rng)).unwrap();
    }
    state.start_online().unwrap();
    let mut miss = vec![[0usize; 2]; HORIZON];
    for _ in 0..t_steps {
        let corr = state.corrections(ConformalMethod::Ocq).unwrap();
        let y = model.draw(&mut rng);
        for h in 0..HORIZON {
            if base[[h, p.lower]] - y[h] > corr.lower[[pi, h]] {
                miss[h][0] += 1;
            }
            if y[h] - base[[h, p.upper]] > corr.upper[[pi, h]] {
                miss[h][1] += 1;
            }
        }
        state.observe(base.view(), None, &y).unwrap();
    }
    miss.iter()
        .map(|m| [m[0] as f64 / t_steps as f64, m[1] as f64 / t_steps as f64])
        .collect()
}

fn criterion_2() -> Check {
    let mut c = Check::new();
    let p = OcqParams::default();
    c.note(format!(
        "η={} K_I={} C_sat={:.4} burn-in {}",
        p.eta,
        p.k_i,
        p.c_sat_value().unwrap(),
        p.burn_in
    ));
    for alpha in [0.2, 0.8] {
        let rates = ocq_miss_rates(alpha, 2000, 42);
        let target = alpha / 2.0;
        let worst = rates
            .iter()
            .flat_map(|r| r.iter().map(|v| (v - target).abs()))
            .fold(0.0, f64::max);
        let mean_lo = rates.iter().map(|r| r[0]).sum::<f64>() / HORIZON as f64;
        let mean_hi = rates.iter().map(|r| r[1]).sum::<f64>() / HORIZON as f64;
        c.expect(
            worst <= 0.02,
            format!(
                "α={alpha}: per-side miss rate vs {target}: worst cell off by {worst:.4}, hour means {mean_lo:.4} / {mean_hi:.4}"
            ),
        );
    }
    c
}

fn criterion_3() -> Check {
    let mut c = Check::new();
    let grid = QuantileGrid::deciles();
    let (warm, pre, post, trials) = (182usize, 100usize, 100usize, 50u64);
    let alphas = [0.2, 0.4];
    let noise_scale = 1.0;
    // [alpha][ocq pre, ocq first 100 post, frozen first 100 post]
    let mut acc = [[0usize; 3]; 2];
    for trial in 0..trials {
        let shifted = SyntheticConfig {
            days: warm + pre + post,
            seed: 500 + trial,
            noise_scale,
            shift: Some(ScaleShift {
                day: warm + pre,
                factor: 2f64.sqrt(),
            }),
            ..Default::default()
        };
        let (raw, _) = generate_synthetic_series(&shifted).unwrap();
        // The forecaster never learns about the shift: it keeps issuing the
        // pre-shift conditional quantiles.
        let (_, stale) = generate_synthetic_series(&SyntheticConfig {
            shift: None,
            ..shifted.clone()
        })
        .unwrap();
        let base_of = |d: usize| {
            Array2::from_shape_fn((HORIZON, grid.len()), |(h, k)| {
                stale.quantile(d, h, grid.levels()[k]).unwrap()
            })
        };
        let y_of = |d: usize| raw.price()[d * HORIZON..(d + 1) * HORIZON].to_vec();

        let mut state = ConformalState::new(grid.clone(), ConformalConfig::default()).unwrap();
        for d in 0..warm {
            state.observe(base_of(d).view(), None, &y_of(d)).unwrap();
        }
        state.start_online().unwrap();
        let frozen = state.clone();
        for d in warm..warm + pre + post {
            let base = base_of(d);
            let y = y_of(d);
            let qf = QuantileForecast::new(date(d), base.clone());
            let ocq = conformalize_forecast(&qf, &state, ConformalMethod::Ocq, None)
                .unwrap()
                .forecast
                .q;
            let cqr = conformalize_forecast(&qf, &frozen, ConformalMethod::Cqr, None)
                .unwrap()
                .forecast
                .q;
            let k = d - warm;
            for (a, &alpha) in alphas.iter().enumerate() {
                let p = grid.pairs()[pair_index(&grid, alpha)];
                if k < pre {
                    acc[a][0] += covered(&ocq, p.lower, p.upper, &y);
                } else if k < pre + 100 {
                    acc[a][1] += covered(&ocq, p.lower, p.upper, &y);
                    acc[a][2] += covered(&cqr, p.lower, p.upper, &y);
                }
            }
            state.observe(base.view(), None, &y).unwrap();
        }
    }
    c.note(format!(
        "{trials} trials, noise scale {noise_scale}, std ×√2 after {pre} online days, window = first 100 post-shift days"
    ));
    for (a, &alpha) in alphas.iter().enumerate() {
        let nominal = 1.0 - alpha;
        let pre_cov = acc[a][0] as f64 / (trials as usize * pre * HORIZON) as f64;
        let ocq = acc[a][1] as f64 / (trials as usize * 100 * HORIZON) as f64;
        let frozen = acc[a][2] as f64 / (trials as usize * 100 * HORIZON) as f64;
        c.expect(
            (ocq - nominal).abs() <= 0.05,
            format!("α={alpha}: OCQ rolling-100 coverage {ocq:.4} vs nominal {nominal} (pre-shift {pre_cov:.4})"),
        );
        c.expect(
            frozen <= nominal - 0.05,
            format!("α={alpha}: frozen CQR coverage {frozen:.4} ≤ {:.2}", nominal - 0.05),
        );
    }
    c
}

fn criterion_4() -> Check {
    let mut c = Check::new();
    for head in common::trainable_heads() {
        let worst = (0..20)
            .map(|s| common::fd_max_rel_error(&head, 100 + s))
            .fold(0.0, f64::max);
        c.expect(
            worst <= 1e-4,
            format!("{}: 20 nets, worst relative error {worst:.2e}", head.name()),
        );
    }
    c
}

fn integrate_density(d: &DistParams) -> f64 {
    let cuts = [1e-13, 1e-6, 1e-3, 0.1, 0.5, 0.9, 1.0 - 1e-3, 1.0 - 1e-6, 1.0 - 1e-13];
    let xs: Vec<f64> = cuts.iter().map(|&p| d.quantile(p).unwrap()).collect();
    let mass: f64 = xs
        .windows(2)
        .map(|w| quadrature::double_exponential::integrate(|x| d.log_pdf(x).exp(), w[0], w[1], 1e-14).integral)
        .sum();
    // Tails beyond the outer cuts hold 2e-13.
    mass + 2e-13
}

fn criterion_5() -> Check {
    let mut c = Check::new();
    let families = [
        DistParams::Normal { mu: 3.0, sigma: 2.0 },
        DistParams::StudentT {
            mu: -1.0,
            sigma: 0.5,
            nu: 2.5,
        },
        DistParams::StudentT {
            mu: 10.0,
            sigma: 4.0,
            nu: 30.0,
        },
        DistParams::JohnsonSu {
            lambda: 50.0,
            sigma: 5.0,
            tau: 1.5,
            zeta: -0.7,
        },
        DistParams::JohnsonSu {
            lambda: 0.0,
            sigma: 0.2,
            tau: 0.6,
            zeta: 1.2,
        },
    ];
    let ps: Vec<f64> = (1..1000)
        .map(|i| i as f64 / 1000.0)
        .chain([1e-6, 1e-4, 1.0 - 1e-4, 1.0 - 1e-6])
        .collect();
    let mut worst_p: f64 = 0.0;
    let mut worst_x: f64 = 0.0;
    for d in &families {
        for &p in &ps {
            let x = d.quantile(p).unwrap();
            worst_p = worst_p.max((d.cdf(x) - p).abs());
            if (0.001..=0.999).contains(&p) {
                let back = d.quantile(d.cdf(x)).unwrap();
                worst_x = worst_x.max((back - x).abs() / x.abs().max(1.0));
            }
        }
    }
    c.expect(worst_p <= 1e-8, format!("CDF(quantile(p)) − p: worst {worst_p:.2e}"));
    c.expect(
        worst_x <= 1e-8,
        format!("quantile(CDF(x)) − x, relative: worst {worst_x:.2e}"),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst_mass: f64 = 0.0;
    for _ in 0..50 {
        let d = DistParams::JohnsonSu {
            lambda: rng.random_range(-50.0..50.0),
            sigma: rng.random_range(0.1..10.0),
            tau: rng.random_range(0.5..4.0),
            zeta: rng.random_range(-2.0..2.0),
        };
        worst_mass = worst_mass.max((integrate_density(&d) - 1.0).abs());
    }
    c.expect(
        worst_mass <= 1e-6,
        format!("JSU density mass, 50 parameter sets: worst |∫f − 1| {worst_mass:.2e}"),
    );

    // 1.959963984540054 is Φ⁻¹(0.975) to double precision.
    let z = norm_inv(0.975);
    c.expect(
        (z - 1.959_963_984_540_054).abs() <= 1e-8,
        format!("Φ⁻¹(0.975) = {z:.15}"),
    );
    c.note(format!(
        "the 6-decimal value 1.959964 differs from it by {:.2e}",
        (z - 1.959964).abs()
    ));

    let worst_t = ps
        .iter()
        .map(|&p| (student_t_inv(p, 1e6) - norm_inv(p)).abs())
        .fold(0.0, f64::max);
    c.expect(
        worst_t <= 1e-4,
        format!("Student-t(ν=1e6) vs Normal quantiles: worst {worst_t:.2e}"),
    );
    c
}

fn criterion_6() -> Check {
    let mut c = Check::new();
    let grid = QuantileGrid::deciles();
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let mut cases = 0;
    let mut violations = 0;
    let mut min_gain = f64::INFINITY;
    while cases < 1000 {
        let row: Vec<f64> = (0..grid.len())
            .map(|_| rng.sample::<f64, _>(StandardNormal) * 5.0)
            .collect();
        if row.windows(2).all(|w| w[0] <= w[1]) {
            continue;
        }
        let raw = Array2::from_shape_vec((1, grid.len()), row).unwrap();
        let y = [rng.sample::<f64, _>(StandardNormal) * 6.0];
        let before = pinball_loss(raw.view(), &y, grid.levels()).unwrap();
        let after = pinball_loss(sort_quantiles(&raw).view(), &y, grid.levels()).unwrap();
        if after > before {
            violations += 1;
        }
        min_gain = min_gain.min(before - after);
        cases += 1;
    }
    c.expect(
        violations == 0,
        format!(
            "{cases} crossing rows: {violations} where sorting raised the pinball loss (smallest gain {min_gain:.3e})"
        ),
    );
    c
}

fn criterion_7() -> Check {
    let mut c = Check::new();
    let k0 = kupiec_test(80, 20, 0.2).unwrap();
    let k0b = kupiec_test(600, 400, 0.4).unwrap();
    c.expect(
        k0.statistic == 0.0 && k0b.statistic == 0.0,
        "Kupiec is 0 at π = 1 − α".into(),
    );
    let k = kupiec_test(70, 30, 0.2).unwrap();
    let oracle = -2.0 * (30.0 * 0.2f64.ln() + 70.0 * 0.8f64.ln() - 30.0 * 0.3f64.ln() - 70.0 * 0.7f64.ln());
    c.expect(
        (k.statistic - oracle).abs() <= 1e-12 && (k.statistic - 5.6335).abs() <= 1e-3,
        format!("Kupiec n1=70 n0=30 α=0.2: {:.6} (formula {oracle:.6})", k.statistic),
    );
    c.note(format!(
        "the rounded figure 5.635 is {:.2e} from the formula value",
        (k.statistic - 5.635).abs()
    ));

    let w = [
        winkler_one(0.0, 10.0, 5.0, 0.2),
        winkler_one(0.0, 10.0, 12.0, 0.2),
        winkler_one(0.0, 10.0, -1.0, 0.2),
    ];
    c.expect(w == [10.0, 30.0, 20.0], format!("Winkler inside/above/below = {w:?}"));

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let n = Normal::new(0.0, 1.0).unwrap();
    let mut worst_anti: f64 = 0.0;
    for _ in 0..50 {
        let a: Vec<f64> = (0..60).map(|_| 3.0 + n.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..60).map(|_| 3.2 + n.sample(&mut rng)).collect();
        let ab = dm_test(&a, &b).unwrap();
        let ba = dm_test(&b, &a).unwrap();
        worst_anti = worst_anti
            .max((ab.statistic + ba.statistic).abs())
            .max((ab.p_left - ba.p_right).abs());
    }
    c.expect(worst_anti <= 1e-12, format!("DM antisymmetry: worst {worst_anti:.2e}"));

    let p_mean = (0..200)
        .map(|_| {
            let a: Vec<f64> = (0..250).map(|_| n.sample(&mut rng)).collect();
            let b: Vec<f64> = (0..250).map(|_| n.sample(&mut rng)).collect();
            dm_test(&a, &b).unwrap().p_left
        })
        .sum::<f64>()
        / 200.0;
    c.expect(
        (p_mean - 0.5).abs() <= 0.05,
        format!("DM on equal-loss streams: mean p {p_mean:.4} over 200 trials"),
    );
    c
}

fn desk_data() -> pepf_core::dataset::SampleSet {
    let (raw, _) = generate_synthetic_series(&SyntheticConfig {
        days: 182 + 120 + 250 + 2,
        seed: 11,
        ..Default::default()
    })
    .unwrap();
    let spec = FeatureSpec {
        exog: vec![ExogSelector {
            column: "load".into(),
            days: vec![0],
            last_value_days: vec![],
        }],
        ..Default::default()
    };
    build_sample_matrix(&raw, &spec, None).unwrap()
}

fn criterion_8() -> Check {
    let mut c = Check::new();
    let data = desk_data();
    let grid = QuantileGrid::deciles();
    let methods = [ConformalMethod::Base, ConformalMethod::Cqr, ConformalMethod::Ocq];
    for head in [HeadKind::Quantile { grid: grid.clone() }, HeadKind::JohnsonSu] {
        let cfg = BacktestConfig {
            head: head.clone(),
            n_members: 2,
            window_days: Some(182),
            warmup_days: 120,
            test_days: Some(250),
            train: TrainConfig {
                hidden: 64,
                batch_size: 32,
                max_epochs: 100,
                patience: 20,
                ..Default::default()
            },
            methods: methods.to_vec(),
            seed: 1,
            ..Default::default()
        };
        let started = Instant::now();
        let out = run_backtest(&data, &cfg, None).unwrap();
        let secs = started.elapsed().as_secs_f64();
        let y = out.realized();
        let pinball = |m| pinball_report(&out.forecasts(m), y.view(), grid.levels()).unwrap();
        let base_pb = pinball(ConformalMethod::Base);
        c.note(format!(
            "{}: {} test days, base pinball {base_pb:.4}, base coverage {:?} ({secs:.0} s)",
            head.name(),
            out.records.len(),
            fmt(&mean_coverage(&out, ConformalMethod::Base))
        ));
        for m in [ConformalMethod::Cqr, ConformalMethod::Ocq] {
            let cov = mean_coverage(&out, m);
            let worst = grid
                .pairs()
                .iter()
                .zip(&cov)
                .map(|(p, v)| (v - (1.0 - p.alpha)).abs())
                .fold(0.0, f64::max);
            c.expect(
                worst <= 0.06,
                format!(
                    "{} {m}: coverage {:?} at α {:?}, worst gap {worst:.4}",
                    head.name(),
                    fmt(&cov),
                    alphas(&grid)
                ),
            );
            let ratio = pinball(m) / base_pb;
            c.expect(
                ratio <= 1.02,
                format!("{} {m}: pinball ratio to base {ratio:.4}", head.name()),
            );
        }
        let again = run_backtest(&data, &cfg, None).unwrap();
        let (d1, d2) = (out.content_digest().unwrap(), again.content_digest().unwrap());
        c.expect(
            d1 == d2,
            format!(
                "{}: re-run digest {} {}",
                head.name(),
                &d1[..16],
                if d1 == d2 { "matches" } else { "differs" }
            ),
        );
    }
    c
}

fn fmt(v: &[f64]) -> Vec<String> {
    v.iter().map(|x| format!("{x:.3}")).collect()
}

fn alphas(grid: &QuantileGrid) -> Vec<f64> {
    grid.pairs().iter().map(|p| (p.alpha * 100.0).round() / 100.0).collect()
}

fn criterion_9() -> Check {
    let mut c = Check::new();
    let params = transform_head_outputs(&[0.0; 4 * HORIZON], &HeadKind::JohnsonSu).unwrap();
    let DistParams::JohnsonSu { sigma, tau, .. } = params[0] else {
        unreachable!()
    };
    // softplus(0) = ln 2.
    let (sigma_ref, tau_ref) = (1e-3 + 3.0 * LN_2, 1.0 + 3.0 * LN_2);
    c.expect(
        (sigma - sigma_ref).abs() <= 1e-5 && (tau - tau_ref).abs() <= 1e-5,
        format!("JSU transform at raw 0: σ = {sigma:.7}, τ = {tau:.7}"),
    );
    c.note(format!(
        "rounded figures 2.08047 / 3.07944 are {:.1e} / {:.1e} away",
        (sigma - 2.08047).abs(),
        (tau - 3.07944).abs()
    ));
    let ln_t = 1e9f64.ln();
    let c_ref = 2.0 / PI * ((ln_t * 0.05).ceil() - 1.0 / ln_t);
    let c_sat = compute_c_sat(1e9, 0.05).unwrap();
    c.expect((c_sat - c_ref).abs() <= 1e-5, format!("C_sat(1e9, 0.05) = {c_sat:.7}"));
    c.note(format!(
        "the rounded figure 1.2425 is {:.1e} away",
        (c_sat - 1.2425).abs()
    ));

    let mut up = OcqTracker::new(1.0, 0.1, &OcqParams::default()).unwrap();
    up.update(2.0);
    let mut down = OcqTracker::new(1.0, 0.1, &OcqParams::default()).unwrap();
    down.update(0.5);
    c.expect(
        (up.threshold() - 1.009).abs() <= 1e-5 && (down.threshold() - 0.999).abs() <= 1e-5,
        format!("OCQ single steps: {:.6} / {:.6}", up.threshold(), down.threshold()),
    );
    c
}

fn main() {
    let criteria: [(&str, fn() -> Check, f64); 9] = [
        ("1 exchangeable coverage", criterion_1, 60.0),
        ("2 OCQ long-run calibration", criterion_2, 10.0),
        ("3 OCQ drift recovery", criterion_3, 60.0),
        ("4 gradient correctness", criterion_4, 30.0),
        ("5 distribution correctness", criterion_5, f64::INFINITY),
        ("6 sorting dominance", criterion_6, f64::INFINITY),
        ("7 metric oracles", criterion_7, f64::INFINITY),
        ("8 desk-scale backtest", criterion_8, 1800.0),
        ("9 hand values", criterion_9, f64::INFINITY),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, run, budget) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let started = Instant::now();
        let mut check = run();
        let secs = started.elapsed().as_secs_f64();
        if budget.is_finite() {
            check.expect(secs <= budget, format!("runtime {secs:.1} s within {budget:.0} s"));
        }
        if !check.ok {
            failed += 1;
        }
        println!(
            "{} criterion {name} ({secs:.1} s)",
            if check.ok { "PASS" } else { "FAIL" }
        );
        for line in &check.lines {
            println!("    {line}");
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
