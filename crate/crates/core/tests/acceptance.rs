//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`cargo test --test acceptance`). Failures are
//! reported, not fatal, unless `HETNET_ACCEPTANCE_STRICT` is set. Result
//! tables are written next to the test binary's scratch directory.

use std::path::PathBuf;
use std::time::Instant;

use hetnet_noma::analytic::{AnalyticModel, AnalyticOptions};
use hetnet_noma::config::{rate_to_threshold, MosWeighting, Scenario};
use hetnet_noma::experiment::{run_figure_with, FigureOptions, FigureRun, Mode, ResultTable};
use hetnet_noma::metrics::{avg_mos, MosCurve};
use hetnet_noma::simulator::{sample_links, LinkSet};
use hetnet_noma::NetworkConfig;

const TRIALS: u64 = 100_000;
const SEED: u64 = 20_240_601;

struct Report {
    failed: Vec<u32>,
}

impl Report {
    fn line(&mut self, id: u32, passed: bool, what: &str, detail: String) {
        let tag = if passed { "PASS" } else { "FAIL" };
        println!("{tag} criterion {id:>2}: {what} | {detail}");
        if !passed {
            self.failed.push(id);
        }
    }
}

fn out_dir() -> PathBuf {
    let d = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn save(name: &str, t: &ResultTable) {
    let path = out_dir().join(name);
    std::fs::write(&path, t.to_csv_string().unwrap()).unwrap();
}

fn links_for(net: &NetworkConfig, n: u64, label: &str) -> LinkSet {
    let start = Instant::now();
    let l = sample_links(net, n, SEED);
    eprintln!("sampled {n} {label} deployments in {:.1?}", start.elapsed());
    l
}

fn figure(fig: u32, scenario: Scenario, mode: Mode, links: Option<&LinkSet>, label: &str) -> FigureRun {
    let start = Instant::now();
    let opts = FigureOptions {
        base: scenario,
        mode,
        n_trials: links.map_or(TRIALS, |l| l.n_trials),
        seed: SEED,
        ..FigureOptions::default()
    };
    let run = run_figure_with(fig, &opts, links, None).expect("figure run");
    eprintln!("fig {fig} ({label}) in {:.1?}", start.elapsed());
    save(&format!("fig{fig}_{label}.csv"), &run.table);
    for r in run.table.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("row error: {:?}", r.error);
    }
    run
}

/// Largest |analytic - sim| and the rows beyond `max(tol, CI)`.
fn agreement(t: &ResultTable, tol: f64) -> (f64, Vec<String>) {
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    for r in &t.rows {
        let (Some(a), Some(s)) = (r.p_pl_analytic, r.p_pl_sim) else {
            bad.push(format!("{} R_pl={} missing", r.series, r.axis_value));
            continue;
        };
        let d = (a.value - s.value).abs();
        worst = worst.max(d);
        if d > tol.max(s.half_width_95) {
            bad.push(format!("a={} R_pl={} ({:+.4})", r.alpha_p, r.axis_value, a.value - s.value));
        }
    }
    (worst, bad)
}

fn summary(bad: &[String]) -> String {
    if bad.is_empty() {
        "none".into()
    } else {
        format!("{} [{}]", bad.len(), bad.join(", "))
    }
}

fn main() {
    let wall = Instant::now();
    let mut rep = Report { failed: Vec::new() };
    let base = Scenario {
        noma: hetnet_noma::config::NomaConfig {
            oma_baseline: false,
            ..Scenario::default().noma
        },
        ..Scenario::default()
    };
    let links = links_for(&base.network, TRIALS, "default");

    // 1: analytic vs simulated primary-layer coverage on the Fig. 2 grid
    let fig2 = figure(2, base, Mode::Both, Some(&links), "default");
    let (worst, bad) = agreement(&fig2.table, 0.03);
    rep.line(
        1,
        bad.is_empty(),
        "Fig. 2 grid, |analytic - sim| <= max(0.03, CI), 1e5 trials",
        format!("max deviation {worst:.4}; violations {}", summary(&bad)),
    );

    // 2: Rayleigh fading everywhere
    let mut rayleigh = base;
    for t in [&mut rayleigh.network.macro_tier, &mut rayleigh.network.small_tier] {
        t.n_los = 1;
        t.n_nlos = 1;
    }
    let r_links = links_for(&rayleigh.network, TRIALS, "rayleigh");
    let fig2r = figure(2, rayleigh, Mode::Both, Some(&r_links), "rayleigh");
    drop(r_links);
    let (worst, bad) = agreement(&fig2r.table, 0.015);
    rep.line(
        2,
        bad.is_empty(),
        "Rayleigh fading, |analytic - sim| <= max(0.015, CI)",
        format!("max deviation {worst:.4}; violations {}", summary(&bad)),
    );

    // 3: monotone in R_pl
    let mut bad = Vec::new();
    for t in [&fig2.table, &fig2r.table] {
        for s in t.series() {
            let rows: Vec<_> = t.series_rows(s).collect();
            for w in rows.windows(2) {
                let (a0, a1) = (w[0].p_pl_analytic.unwrap(), w[1].p_pl_analytic.unwrap());
                if a1.value > a0.value {
                    bad.push(format!("{s} analytic at {}", w[1].axis_value));
                }
                let (s0, s1) = (w[0].p_pl_sim.unwrap(), w[1].p_pl_sim.unwrap());
                if s1.value > s0.value + s0.half_width_95 + s1.half_width_95 {
                    bad.push(format!("{s} sim at {}", w[1].axis_value));
                }
            }
        }
    }
    rep.line(
        3,
        bad.is_empty(),
        "p_pl non-increasing in R_pl (analytic strictly, sim up to CI overlap)",
        format!("violations {}", summary(&bad)),
    );

    // 4: orderings in alpha_p
    let mut bad = Vec::new();
    let series = fig2.table.series();
    for pair in series.windows(2) {
        for (lo, hi) in fig2.table.series_rows(pair[0]).zip(fig2.table.series_rows(pair[1])) {
            if hi.p_pl_analytic.unwrap().value < lo.p_pl_analytic.unwrap().value {
                bad.push(format!("p_pl {} < {} at R_pl={}", pair[1], pair[0], lo.axis_value));
            }
        }
    }
    let fig3 = figure(3, base, Mode::Both, Some(&links), "default");
    for w in fig3.table.rows.windows(2) {
        if w[1].p_psl_analytic.unwrap().value > w[0].p_psl_analytic.unwrap().value {
            bad.push(format!("p_psl rises at alpha_p={}", w[1].axis_value));
        }
    }
    let psl: Vec<String> = fig3
        .table
        .rows
        .iter()
        .map(|r| format!("{:.3}", r.p_psl_analytic.unwrap().value))
        .collect();
    rep.line(
        4,
        bad.is_empty(),
        "analytic p_pl non-decreasing and p_psl (R_pl=0.1) non-increasing in alpha_p",
        format!("p_psl over alpha_p 0.50..0.95 = [{}]; violations {}", psl.join(" "), summary(&bad)),
    );

    // 7/8 use the rate figure, evaluated by simulation on the shared deployments
    let with_oma = Scenario {
        noma: hetnet_noma::config::NomaConfig {
            oma_baseline: true,
            ..base.noma
        },
        ..base
    };
    let fig4 = figure(4, with_oma, Mode::Sim, Some(&links), "default");

    // 5: dominance and bounds over every table
    let mut bad = Vec::new();
    let mut checked = 0;
    for (name, t) in [("fig2", &fig2.table), ("fig2r", &fig2r.table), ("fig3", &fig3.table), ("fig4", &fig4.table)] {
        for r in &t.rows {
            let probs = [
                r.p_pl_analytic.map(|i| i.value),
                r.p_psl_analytic.map(|i| i.value),
                r.p_pl_sim.map(|c| c.value),
                r.p_psl_sim.map(|c| c.value),
            ];
            checked += 1;
            let mut ok = probs.iter().flatten().all(|p| (0.0..=1.0).contains(p));
            if let (Some(a), Some(b)) = (probs[0], probs[1]) {
                ok &= b <= a;
            }
            if let (Some(a), Some(b)) = (probs[2], probs[3]) {
                ok &= b <= a;
            }
            let noma = hetnet_noma::config::NomaConfig {
                alpha_p: r.alpha_p,
                rate_pl: r.rate_pl,
                rate_sl: r.rate_sl,
                ..base.noma
            };
            let floor = hetnet_noma::config::NomaConfig {
                mos_weighting: MosWeighting::Floor,
                ..noma
            };
            let curve = MosCurve::from_config(&noma).unwrap();
            for (p, q) in [(probs[0], probs[1]), (probs[2], probs[3])] {
                if let (Some(p), Some(q)) = (p, q) {
                    let q = q.min(p);
                    let v = avg_mos(p, q, &noma, &curve).unwrap();
                    let f = avg_mos(p, q, &floor, &curve).unwrap();
                    ok &= (0.0..=5.0).contains(&v) && (1.0..=5.0 + 1e-12).contains(&f);
                }
            }
            if !ok {
                bad.push(format!("{name} {} {}", r.series, r.axis_value));
            }
        }
    }
    rep.line(
        5,
        bad.is_empty(),
        "p_psl <= p_pl, probabilities in [0,1], MOS in [0,5] / [1,5]",
        format!("{checked} rows checked; violations {}", summary(&bad)),
    );

    // 6: degenerate reductions
    let mut bad = Vec::new();
    let mut unbiased = base.network;
    unbiased.bias_b = 1.0;
    let b_links = links_for(&unbiased, TRIALS, "b=1");
    let case3 = b_links.estimate(&base.noma).case_shares[2].value;
    let an_case3 = AnalyticModel::new(&unbiased, AnalyticOptions::default())
        .coverage_case3(&base.noma, base.noma.t_pl())
        .unwrap()
        .total
        .value;
    drop(b_links);
    if case3 != 0.0 || an_case3 != 0.0 {
        bad.push(format!("b=1: sim case-3 share {case3}, analytic case 3 {an_case3}"));
    }
    let mut macro_only = base.network;
    macro_only.small_tier.density = 0.0;
    let m_links = links_for(&macro_only, TRIALS, "macro-only");
    let est = m_links.estimate(&base.noma);
    drop(m_links);
    let m = AnalyticModel::new(&macro_only, AnalyticOptions::default());
    let pl = m.coverage_pl(&base.noma, base.noma.t_pl()).unwrap();
    let (total, c2) = (pl.total.value, pl.case2.value);
    if est.case_shares[1].value != 1.0 || (total - c2).abs() > 0.015 || (est.p_pl.value - c2).abs() > 0.015 {
        bad.push(format!(
            "lambda_S=0: case-2 share {}, analytic total {total:.4} vs case 2 {c2:.4}, sim {:.4}",
            est.case_shares[1].value, est.p_pl.value
        ));
    }
    let model = AnalyticModel::new(&base.network, AnalyticOptions::default());
    for (alpha, r_pl) in [(0.5, 1.0), (0.4, 1.0), (0.25, 0.5)] {
        let noma = hetnet_noma::config::NomaConfig {
            alpha_p: alpha,
            rate_pl: r_pl,
            ..base.noma
        };
        let t = rate_to_threshold(r_pl);
        assert!(alpha <= t / (1.0 + t) + 1e-12);
        let a = model.coverage_pl(&noma, t).unwrap().total.value;
        let s = links.estimate(&noma).p_pl.value;
        if a != 0.0 || s != 0.0 {
            bad.push(format!("alpha_p={alpha}, R_pl={r_pl}: analytic {a}, sim {s}"));
        }
    }
    rep.line(
        6,
        bad.is_empty(),
        "b=1 => no case 3; lambda_S=0 => case 2 only; infeasible split => zero coverage",
        format!(
            "b=1 case-3 share {case3}; lambda_S=0 p_pl {total:.4} vs case 2 {c2:.4} (sim {:.4}); violations {}",
            est.p_pl.value,
            summary(&bad)
        ),
    );

    // 7: NOMA vs OMA, coupled
    let mut bad = Vec::new();
    let mut worst_rate = f64::INFINITY;
    let mut worst_mos = f64::INFINITY;
    for r in &fig4.table.rows {
        let (g, h) = (r.rate_gain_sim.unwrap(), r.mos_gain_sim.unwrap());
        worst_rate = worst_rate.min(g.mean);
        worst_mos = worst_mos.min(h.mean);
        if g.mean < -2.0 * g.half_width_95 {
            bad.push(format!("rate a={} R_sl={} ({:+.4})", r.alpha_p, r.axis_value, g.mean));
        }
        if h.mean < -2.0 * h.half_width_95 {
            bad.push(format!("MOS a={} R_sl={} ({:+.4})", r.alpha_p, r.axis_value, h.mean));
        }
    }
    rep.line(
        7,
        bad.is_empty(),
        "simulated NOMA rate and MOS >= OMA up to 2 CI (paired), alpha_p in {0.5, 0.7, 0.9}",
        format!(
            "worst rate gain {worst_rate:+.4}, worst MOS gain {worst_mos:+.4}; violations {}",
            summary(&bad)
        ),
    );

    // 8: crossover, diagnostic only
    let cross = fig4.checks.iter().find(|c| c.name == "rate_crossover").unwrap();
    println!(
        "{} criterion  8: (diagnostic, not gated) alpha_p=0.5 vs 0.9 rate crossover between R_sl 0.3 and 0.4 | {}",
        if cross.passed { "PASS" } else { "NOTE" },
        cross.detail
    );

    // 9: determinism across runs and worker counts
    let small = 2_000;
    let mut csvs = Vec::new();
    for workers in [1, 3, 1] {
        let opts = FigureOptions {
            base,
            mode: Mode::Both,
            n_trials: small,
            seed: SEED,
            workers,
            ..FigureOptions::default()
        };
        let mut buf = Vec::new();
        hetnet_noma::experiment::run_figure(3, &opts, Some(&mut buf)).unwrap();
        csvs.push(buf);
    }
    let same = csvs.windows(2).all(|w| w[0] == w[1]);
    rep.line(
        9,
        same,
        "repeated figure run is byte-identical across worker counts 1, 3, 1",
        format!("{} bytes per CSV", csvs[0].len()),
    );

    // 10: quadrature and window self-consistency
    let mut bad = Vec::new();
    let coarse = AnalyticModel::new(&base.network, AnalyticOptions::default());
    let mut fine_opts = AnalyticOptions::default();
    fine_opts.quad = fine_opts.quad.scaled(0.5);
    let fine = AnalyticModel::new(&base.network, fine_opts);
    let mut worst_ratio: f64 = 0.0;
    for (alpha, r_pl, r_sl) in [(0.9, 0.1, 0.2), (0.6, 0.5, 0.2), (0.8, 1.0, 0.2), (0.5, 0.1, 0.6), (0.7, 0.3, 0.4)] {
        let noma = hetnet_noma::config::NomaConfig {
            alpha_p: alpha,
            rate_pl: r_pl,
            rate_sl: r_sl,
            ..base.noma
        };
        let pairs = [
            (
                coarse.coverage_pl(&noma, noma.t_pl()).unwrap().total,
                fine.coverage_pl(&noma, noma.t_pl()).unwrap().total,
            ),
            (
                coarse.coverage_both_layers(&noma).unwrap().total,
                fine.coverage_both_layers(&noma).unwrap().total,
            ),
        ];
        for (k, (c, f)) in pairs.iter().enumerate() {
            let d = (c.value - f.value).abs();
            worst_ratio = worst_ratio.max(d / c.error.max(f64::MIN_POSITIVE));
            if d >= c.error {
                bad.push(format!("{} a={alpha} R_pl={r_pl}: change {d:.2e} vs error {:.2e}", ["p_pl", "p_psl"][k], c.error));
            }
        }
    }
    let n_window = 10_000;
    let near = sample_links(&base.network, n_window, SEED);
    let mut wide_net = base.network;
    wide_net.window_radius_m *= 2.0;
    let far = sample_links(&wide_net, n_window, SEED);
    let mut worst_window: f64 = 0.0;
    for (alpha, r_pl) in [(0.9, 0.1), (0.6, 0.5), (0.8, 1.0)] {
        let noma = hetnet_noma::config::NomaConfig {
            alpha_p: alpha,
            rate_pl: r_pl,
            ..base.noma
        };
        let (a, b) = (near.estimate(&noma), far.estimate(&noma));
        for (name, x, y) in [("p_pl", a.p_pl, b.p_pl), ("p_psl", a.p_psl, b.p_psl)] {
            let d = (x.value - y.value).abs();
            worst_window = worst_window.max(d);
            if d >= x.half_width_95 {
                bad.push(format!("window {name} a={alpha} R_pl={r_pl}: change {d:.4} vs CI {:.4}", x.half_width_95));
            }
        }
    }
    rep.line(
        10,
        bad.is_empty(),
        "halving rel_tol moves analytic values by less than their error; doubling the window moves sim values by less than CI",
        format!(
            "max change/error {worst_ratio:.3}; max window change {worst_window:.5}; violations {}",
            summary(&bad)
        ),
    );

    eprintln!("acceptance finished in {:.1?}; tables in {}", wall.elapsed(), out_dir().display());
    if !rep.failed.is_empty() {
        println!("criteria not met: {:?}", rep.failed);
        if std::env::var_os("HETNET_ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    }
}
