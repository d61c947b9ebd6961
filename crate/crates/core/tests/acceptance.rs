//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use driftcal::calibration::{run_blind, run_semiblind, BlindOutcome};
use driftcal::neural::gradcheck::check_random_networks;
use driftcal::neural::Stage;
use driftcal::signal::{convolve, simulate, FilterSpec};
use driftcal::sysid::{shape_of, drift_diagnostic};
use driftcal::{rmse, ChainConfig, ExperimentConfig, FirFilter, Flavour, SignalSeries};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn blind(seed: u64) -> BlindOutcome {
    let cfg = ExperimentConfig {
        seed,
        ..ExperimentConfig::default()
    };
    run_blind(&cfg).expect("blind run")
}

fn semiblind(num_samples: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        flavour: Flavour::Semiblind,
        ..ExperimentConfig::default()
    };
    cfg.chain_rc.num_samples = num_samples;
    cfg.chain_uc.num_samples = num_samples;
    cfg
}

fn relative_chain_error(cfg: ChainConfig) -> f64 {
    let out = simulate(&cfg).unwrap();
    rmse(&out.measurand, &out.reading).unwrap() / out.measurand.rms()
}

fn c1() -> Outcome {
    let s = check_random_networks(20, 2026).unwrap();
    outcome(
        s.max_relative_error < 1e-4,
        format!("{} networks, max relative error {:.3e}", s.networks, s.max_relative_error),
    )
}

fn c2() -> Outcome {
    let r = relative_chain_error(ChainConfig::calibrated());
    outcome(r < 0.01, format!("RMSE(x, y)/RMS(x) = {r:.5}"))
}

fn c3() -> Outcome {
    let r = relative_chain_error(ChainConfig::drifted());
    outcome(r > 0.05, format!("RMSE(x, y)/RMS(x) = {r:.5}"))
}

fn c4(run: &BlindOutcome) -> Outcome {
    let (first, last) = (run.trace_rc.first().unwrap(), run.trace_rc.last().unwrap());
    let rx = last.loss_x.unwrap() / first.loss_x.unwrap();
    let ry = last.loss_y / first.loss_y;
    outcome(
        last.epoch == 200 && rx < 0.1 && ry < 0.1,
        format!("epoch {} loss_x ratio {rx:.4}, loss_y ratio {ry:.4}", last.epoch),
    )
}

fn environment_bits(run: &BlindOutcome, after: bool) -> Vec<u64> {
    let net = if after { &run.network } else { &run.network_rc };
    Stage::ENVIRONMENT
        .iter()
        .flat_map(|&s| {
            let l = net.layer(s);
            l.weights().iter().chain(l.bias()).map(|v| v.to_bits()).collect::<Vec<_>>()
        })
        .collect()
}

fn c5(run: &BlindOutcome) -> Outcome {
    let (first, last) = (run.trace_uc.first().unwrap(), run.trace_uc.last().unwrap());
    let ratio = last.loss_y / first.loss_y;
    let frozen = environment_bits(run, false) == environment_bits(run, true);
    let stage1_moved = run.network_rc.layer(Stage::ObservationInverse) != run.network.layer(Stage::ObservationInverse);
    outcome(
        last.epoch == 200 && ratio < 0.2 && frozen && stage1_moved,
        format!("loss_y ratio {ratio:.4}, environment layers bit-identical: {frozen}"),
    )
}

fn c6(runs: &[&BlindOutcome]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for run in runs {
        let r = &run.report;
        let ok = r.rmse_calibrated <= 0.5 * r.rmse_stale_restitution;
        pass &= ok;
        parts.push(format!(
            "seed {} {:.4}/{:.4} (x{:.3})",
            r.seed, r.rmse_calibrated, r.rmse_stale_restitution, r.improvement_ratio
        ));
    }
    outcome(pass && runs.len() >= 3, format!("calibrated/stale: {}", parts.join(", ")))
}

fn c7() -> Outcome {
    let r = run_semiblind(&semiblind(20_000)).unwrap().report;
    let (k1, k2) = (r.estimated_k1.unwrap(), r.estimated_k2.unwrap());
    let nmse = r.environment_nmse.unwrap();
    let pass = nmse < 1e-4 && (k1 - 0.3).abs() < 1e-3 && (k2 - 0.3).abs() < 1e-3 && r.improvement_ratio >= 100.0;
    outcome(
        pass,
        format!("h nmse {nmse:.3e}, k = ({k1:.6}, {k2:.6}), improvement x{:.3e}", r.improvement_ratio),
    )
}

fn c8() -> Outcome {
    let h = ChainConfig::calibrated().filter.build().unwrap();
    let base = shape_of(&h).unwrap();
    let mut worst = 0.0_f64;
    for c in [-5.0, 0.1, 3.0] {
        let scaled = FirFilter::new(h.taps().iter().map(|v| c * v).collect()).unwrap();
        let s = shape_of(&scaled).unwrap();
        for (a, b) in s.taps().iter().zip(base.taps()) {
            worst = worst.max((a - b).abs());
        }
    }

    let drift_cfg = semiblind(16_384);
    let drift = run_semiblind(&drift_cfg).unwrap();
    let under_drift = drift.report.shape_drift.unwrap();

    let mut swap_cfg = semiblind(16_384);
    swap_cfg.chain_uc.filter = FilterSpec::Bandpass {
        num_taps: 100,
        low_cut: 0.3,
        high_cut: 0.45,
    };
    swap_cfg.allow_environment_change = true;
    let swap = run_semiblind(&swap_cfg).unwrap();
    let under_swap = drift_diagnostic(
        &swap.uc.event,
        &swap.uc.reading,
        &swap_cfg.chain_rc.sensor,
        &drift.h_hat,
        swap_cfg.fir_order,
    )
    .unwrap();
    outcome(
        worst <= 1e-12 && under_drift < 0.15 && under_swap > 0.3,
        format!("shape deviation {worst:.1e}, diagnostic drift {under_drift:.4}, swap {under_swap:.4}"),
    )
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

fn c9(first: &BlindOutcome) -> Outcome {
    let cfg = ExperimentConfig {
        seed: first.report.seed,
        ..ExperimentConfig::default()
    };
    let second = run_blind(&cfg).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    first.emit(&cfg.train, a.path()).unwrap();
    second.emit(&cfg.train, b.path()).unwrap();
    let (fa, fb) = (files(a.path()), files(b.path()));
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    outcome(fa == fb && fa.len() >= 6, format!("{} artifacts identical: {}", fa.len(), names.join(" ")))
}

fn parse_cases(text: &str, tags: &[&str]) -> Vec<Vec<Vec<f64>>> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    lines
        .chunks(tags.len())
        .map(|chunk| {
            chunk
                .iter()
                .zip(tags)
                .map(|(line, tag)| {
                    let rest = line.strip_prefix(tag).expect("fixture tag");
                    rest.split_whitespace().map(|t| t.parse().unwrap()).collect()
                })
                .collect()
        })
        .collect()
}

fn c10() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let conv = parse_cases(&fs::read_to_string(dir.join("oracle_convolve.txt")).unwrap(), &["e ", "h ", "y "]);
    let mut worst_conv = 0.0_f64;
    for case in &conv {
        let e = SignalSeries::new(case[0].clone()).unwrap();
        let h = FirFilter::new(case[1].clone()).unwrap();
        let y = convolve(&e, &h).unwrap();
        assert_eq!(y.len(), case[2].len());
        for (a, b) in y.iter().zip(&case[2]) {
            worst_conv = worst_conv.max((a - b).abs());
        }
    }
    let rm = parse_cases(&fs::read_to_string(dir.join("oracle_rmse.txt")).unwrap(), &["a ", "b ", "r "]);
    let mut worst_rmse = 0.0_f64;
    for case in &rm {
        let r = rmse(&case[0], &case[1]).unwrap();
        worst_rmse = worst_rmse.max((r - case[2][0]).abs());
    }
    outcome(
        conv.len() == 100 && rm.len() == 100 && worst_conv <= 1e-12 && worst_rmse <= 1e-12,
        format!(
            "{} convolve cases max |diff| {worst_conv:.1e}, {} rmse cases max |diff| {worst_rmse:.1e}",
            conv.len(),
            rm.len()
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(u8, &str, Outcome)> = vec![
        (1, "gradient oracle", c1()),
        (2, "chain fidelity", c2()),
        (3, "drift visibility", c3()),
    ];
    let runs: Vec<BlindOutcome> = [42, 43, 44].into_iter().map(blind).collect();
    results.push((4, "RC training convergence", c4(&runs[0])));
    results.push((5, "UC retraining under freezing", c5(&runs[0])));
    results.push((6, "blind calibration improvement", c6(&runs.iter().collect::<Vec<_>>())));
    results.push((7, "semi-blind exactness", c7()));
    results.push((8, "shape invariance", c8()));
    results.push((9, "determinism", c9(&runs[0])));
    results.push((10, "oracle equivalence", c10()));

    let mut failed = 0;
    for (id, name, o) in &results {
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {status} {name}: {}", o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
