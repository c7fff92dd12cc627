//! Acceptance run over the full criteria list. Runs without the libtest
//! harness so the timed criteria execute one at a time; prints one
//! PASS/FAIL line per criterion and exits non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;

use common::*;
use thermonet::cli::commands::{
    cmd_eval, cmd_preprocess, cmd_pretrain, cmd_synth, cmd_train, mean_image_adp, Context,
};
use thermonet::cli::config::ExperimentConfig;
use thermonet::cli::formats::{load_checkpoint, save_checkpoint};
use thermonet::evalreport::{pearson, EvalReport, PartRow, VariantRows};
use thermonet::models::{
    build_predictor, build_recon_model, pretrain_recon, recon_adp, train_predictor, ArchSpec, Checkpoint,
    Example, ModelVariant, PartInput, Predictor, ReconKind, ReconModel, TrainConfig, DEFAULT_HIDDEN,
};
use thermonet::preprocess::{
    assemble_dataset, crop_roi, normalize_orientation, split_by_build, undistort, Dataset, PreprocessOptions,
    SplitRatios,
};
use thermonet::synthbed::{distort, generate_build, Orientation, SynthConfig, ThermalFrame};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Protocol-scale dataset: 24 builds split 0.78 / 0.09 / 0.13.
fn protocol_dataset() -> Dataset {
    let s = SynthConfig {
        builds: 24,
        ..Default::default()
    };
    let builds: Vec<_> = (0..s.builds)
        .map(|i| {
            let (l, c) = s.job(0, i);
            generate_build(&l, &c).unwrap()
        })
        .collect();
    let opts = PreprocessOptions {
        ratios: SplitRatios {
            train: 0.78,
            val: 0.09,
            test: 0.13,
        },
        ..Default::default()
    };
    assemble_dataset(&builds, &opts).unwrap()
}

fn vols<'a>(ds: &'a Dataset, idx: &[usize]) -> Vec<&'a [f64]> {
    idx.iter().map(|&i| ds.voxels[i].data.as_slice()).collect()
}

fn examples<'a>(ds: &'a Dataset, idx: &[usize], variant: ModelVariant) -> Vec<Example<'a>> {
    idx.iter()
        .map(|&i| Example {
            input: input(ds, i, variant),
            target: ds.records[i].target,
        })
        .collect()
}

fn input(ds: &Dataset, i: usize, variant: ModelVariant) -> PartInput<'_> {
    PartInput {
        features: &ds.records[i].features,
        volume: if variant == ModelVariant::NoThermal { &[] } else { &ds.voxels[i].data },
    }
}

/// Mean of the length, width and height mean absolute % errors on the test split.
fn test_dim_error(model: &Predictor, ds: &Dataset) -> f64 {
    let v = model.spec.variant;
    let idx = &ds.split.test;
    let inputs: Vec<PartInput> = idx.iter().map(|&i| input(ds, i, v)).collect();
    let preds = model.predict(&inputs).unwrap();
    let rows = idx
        .iter()
        .zip(preds)
        .map(|(&i, pred)| {
            let r = &ds.records[i];
            PartRow {
                build_id: r.build_id,
                part_id: r.part_id,
                bed_x: r.bed_x,
                bed_y: r.bed_y,
                bed_z: r.bed_z,
                truth: r.target,
                pred,
                adp: None,
            }
        })
        .collect();
    let report = EvalReport {
        variants: vec![VariantRows {
            variant: v.as_str().into(),
            rows,
        }],
        correlations: Vec::new(),
        bed: [160, 120],
    };
    report.summary().unwrap()[0].mean_dimensional_error()
}

fn train_variant(ds: &Dataset, variant: ModelVariant, encoder: Option<&ReconModel>, seed: u64) -> Predictor {
    let enc = variant.needs_encoder().then(|| encoder.expect("encoder").clone());
    let mut p = build_predictor(variant, enc, ds.feature_dim(), DEFAULT_HIDDEN, seed).unwrap();
    let cfg = TrainConfig {
        seed,
        ..TrainConfig::predictor()
    };
    train_predictor(&mut p, &examples(ds, &ds.split.train, variant), &examples(ds, &ds.split.val, variant), &cfg)
        .unwrap();
    p
}

fn pretrain(ds: &Dataset, kind: ReconKind, latent: usize, epochs: usize) -> ReconModel {
    let mut m = build_recon_model(ArchSpec::thermal(kind, latent), 0).unwrap();
    let cfg = TrainConfig {
        latent,
        epochs,
        ..TrainConfig::recon()
    };
    pretrain_recon(&mut m, &vols(ds, &ds.split.train), &vols(ds, &ds.split.val), &cfg).unwrap();
    m
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

// ------------------------------------------------------------- criteria

fn gradient_fidelity() -> Outcome {
    let t = Instant::now();
    let mut worst = ("", 0.0f64);
    for (name, err) in per_op_gradient_errors(2024) {
        if err > worst.1 {
            worst = (name, err);
        }
    }
    let mut nets = 0.0f64;
    for seed in [1, 2, 3] {
        nets = nets.max(composite_gradient_error(seed));
    }
    let secs = t.elapsed().as_secs_f64();
    check(
        worst.1 <= GRAD_TOL && nets <= GRAD_TOL && secs < 60.0,
        format!("worst op {} {:.2e}, worst network {nets:.2e}, {secs:.1} s", worst.0, worst.1),
    )
}

fn conv_equivalence() -> Outcome {
    let mut r = rng(99);
    let worst = (0..100).map(|_| conv_case_error(&random_conv_case(&mut r))).fold(0.0, f64::max);
    check(worst <= 1e-6, format!("100 cases, max abs error {worst:.2e}"))
}

fn kld_correctness() -> Outcome {
    let mut r = rng(17);
    let mut worst = 0.0f64;
    for i in 0..10 {
        let mu: Vec<f64> = (0..3).map(|_| r.random_range(-1.5..1.5)).collect();
        let lv: Vec<f64> = (0..3).map(|_| r.random_range(-1.2..1.2)).collect();
        let closed = kld_engine(&mu, &lv);
        let mc = kld_monte_carlo(&mu, &lv, 1_000_000, 1000 + i);
        worst = worst.max((mc - closed).abs() / closed);
    }
    let negatives = (0..1000)
        .filter(|_| {
            let mu: Vec<f64> = (0..4).map(|_| r.random_range(-3.0..3.0)).collect();
            let lv: Vec<f64> = (0..4).map(|_| r.random_range(-3.0..3.0)).collect();
            kld_engine(&mu, &lv) < 0.0
        })
        .count();
    check(
        worst <= 0.02 && negatives == 0,
        format!("max relative MC deviation {:.3}% over 10 pairs, {negatives} negative of 1000", worst * 100.0),
    )
}

fn reconstruction(ds: &Dataset) -> (Outcome, ReconModel) {
    let (tr, te) = (vols(ds, &ds.split.train), vols(ds, &ds.split.test));
    let epochs = 34;
    let t = Instant::now();
    let ae = pretrain(ds, ReconKind::Ae, 9, epochs);
    let vae = pretrain(ds, ReconKind::Vae3d, 9, epochs);
    let secs = t.elapsed().as_secs_f64();
    let base = mean_image_adp(&tr, &te).unwrap();
    let (a, v) = (recon_adp(&ae, &te).unwrap(), recon_adp(&vae, &te).unwrap());
    let outcome = check(
        ds.split.train.len() >= 819
            && ds.split.val.len() >= 91
            && ds.split.test.len() >= 131
            && v <= 0.3 * base
            && v <= 1.1 * a
            && secs <= 900.0,
        format!(
            "{}/{}/{} parts; VAE3D ADP {v:.3}, AE {a:.3}, mean-image {base:.3} (ratio {:.3}); pretraining {secs:.0} s",
            ds.split.train.len(),
            ds.split.val.len(),
            ds.split.test.len(),
            v / base
        ),
    );
    (outcome, vae)
}

fn variant_ordering(ds: &Dataset, vae: &ReconModel) -> (Outcome, Predictor) {
    let mut errs: [Vec<f64>; 3] = Default::default();
    let variants = [ModelVariant::NoThermal, ModelVariant::SequentialThermal, ModelVariant::LatentThermal];
    let mut keep = None;
    for seed in 0..3 {
        for (k, &v) in variants.iter().enumerate() {
            let p = train_variant(ds, v, Some(vae), seed);
            errs[k].push(test_dim_error(&p, ds));
            if seed == 0 && v == ModelVariant::LatentThermal {
                keep = Some(p);
            }
        }
    }
    let per_seed = format!("{:.3?} / {:.3?} / {:.3?}", errs[0], errs[1], errs[2]);
    let [no, seq, lat] = errs.map(median);
    let between = lat <= seq && seq <= no;
    let ties = (seq - lat).abs() <= 0.05 * lat || (seq - no).abs() <= 0.05 * no;
    let outcome = check(
        lat <= 0.8 * no && (between || ties),
        format!(
            "median mean % error NoThermal {no:.3}, Sequential {seq:.3}, Latent {lat:.3} ({:.0}% below NoThermal); per seed {per_seed}",
            100.0 * (1.0 - lat / no)
        ),
    );
    (outcome, keep.expect("seed 0 latent model"))
}

fn latent_sweep(ds: &Dataset) -> Outcome {
    let mut medians = Vec::new();
    let mut per_seed = Vec::new();
    for d in [5, 9, 20] {
        let enc = pretrain(ds, ReconKind::Vae3d, d, 12);
        let errs: Vec<f64> = (0..3)
            .map(|seed| test_dim_error(&train_variant(ds, ModelVariant::LatentThermal, Some(&enc), seed), ds))
            .collect();
        per_seed.push(format!("d={d} {errs:.3?}"));
        medians.push((d, median(errs)));
    }
    let (lo, hi) = medians.iter().fold((f64::MAX, 0.0f64), |(lo, hi), &(_, e)| (lo.min(e), hi.max(e)));
    check(
        hi / lo <= 2.0,
        format!("median mean % error by d {medians:.3?}, max/min {:.2}; per seed {}", hi / lo, per_seed.join(", ")),
    )
}

fn write_config(dir: &Path, text: &str) -> ExperimentConfig {
    fs::write(dir.join("config.toml"), text).unwrap();
    ExperimentConfig::from_toml(text).unwrap()
}

const GEOMETRY_CONFIG: &str = r#"
seed = 4

[synth]
builds = 5

[preprocess]
roi_edge = 16

[recon]
kinds = ["vae3d"]
epochs = 25

[predictor]
variants = ["geometry-latent"]
epochs = 100
"#;

fn geometry_variant() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut ctx = Context::new(dir.path().join("run"), write_config(dir.path(), GEOMETRY_CONFIG));
    ctx.quiet = true;
    cmd_synth(&ctx).unwrap();
    cmd_preprocess(&ctx).unwrap();
    let recon = cmd_pretrain(&ctx).unwrap();
    let geo = recon.iter().find(|r| r.input == "geometry").expect("geometry encoder");
    cmd_train(&ctx).unwrap();
    let summary = cmd_eval(&ctx).unwrap();
    let eval = ctx.dir("eval");
    let missing: Vec<&str> = ["summary.csv", "summary.svg", "per_part.csv", "per_part.svg", "bed_density.csv", "bed_density.svg"]
        .into_iter()
        .filter(|f| !eval.join(f).is_file())
        .collect();
    check(
        missing.is_empty() && geo.test_adp < geo.baseline_test_adp && summary[0].mean_dimensional_error().is_finite(),
        format!(
            "ROI 16: geometry ADP {:.3} vs mean-image {:.3}; geometry-latent mean % error {:.3}; missing reports {missing:?}",
            geo.test_adp,
            geo.baseline_test_adp,
            summary[0].mean_dimensional_error()
        ),
    )
}

fn min_temp_density_r(cfg: &SynthConfig) -> f64 {
    let builds: Vec<_> = (0..cfg.builds)
        .map(|i| {
            let (l, c) = cfg.job(8, i);
            generate_build(&l, &c).unwrap()
        })
        .collect();
    let ds = assemble_dataset(&builds, &PreprocessOptions::default()).unwrap();
    let t: Vec<f64> = ds.records.iter().map(|r| r.aggregates.min).collect();
    let d: Vec<f64> = ds.records.iter().map(|r| r.target.density).collect();
    pearson(&t, &d).unwrap()
}

fn correlation() -> Outcome {
    let mut clean = SynthConfig {
        builds: 6,
        noise_c: 0.0,
        ..Default::default()
    };
    clean.quality = clean.quality.noiseless();
    let r0 = min_temp_density_r(&clean);
    let r1 = min_temp_density_r(&SynthConfig {
        builds: 6,
        ..Default::default()
    });
    check(
        r0.abs() >= 0.99 && r1.abs() >= 0.8,
        format!("r(min temperature, density): noise-free {r0:.4}, default noise {r1:.4}"),
    )
}

const TINY_CONFIG: &str = r#"
seed = 11

[synth]
builds = 3

[recon]
latent = 4
epochs = 2

[predictor]
epochs = 5
"#;

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), TINY_CONFIG);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_thermonet"))
            .args(["all", "--quiet", "--config"])
            .arg(dir.path().join("config.toml"))
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        tree(&out)
    };
    let (a, b) = (run("a"), run("b"));
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let has = |stage: &str| a.iter().any(|(p, _)| p.starts_with(stage));
    check(
        a.len() == b.len() && differing.is_empty() && ["dataset", "pretrain", "train", "eval"].iter().all(|s| has(s)),
        format!("{} files compared across two runs, {} differ {differing:?}", a.len(), differing.len()),
    )
}

fn inference_speed(ds: &Dataset, model: &Predictor) -> Outcome {
    let inputs: Vec<PartInput> = (0..500)
        .map(|k| input(ds, k % ds.records.len(), ModelVariant::LatentThermal))
        .collect();
    let t = Instant::now();
    let preds = model.predict(&inputs).unwrap();
    let secs = t.elapsed().as_secs_f64();
    check(preds.len() == 500 && secs < 5.0, format!("500 parts (encoder + predictor) in {secs:.3} s"))
}

fn pipeline_invariants(ds: &Dataset, vae: &ReconModel, predictor: &Predictor) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    // Orientation normalization on real crops of one build.
    let (layout, job) = SynthConfig::default().job(21, 0);
    let build = generate_build(&layout, &job).unwrap();
    let canonical: Vec<ThermalFrame> = (0..layout.layers).map(|l| build.frames_of_layer(l).last().unwrap().clone()).collect();
    let mut orient_ok = true;
    for p in &layout.parts {
        let raw = crop_roi(&canonical, p).unwrap();
        let once = normalize_orientation(&raw, p.orientation).unwrap();
        let twice = normalize_orientation(&once, p.orientation).unwrap();
        let mut a = raw.data.clone();
        let mut b = once.data.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        orient_ok &= once == twice && a == b && (p.orientation == Orientation::Vertical || raw.shape != once.shape);
    }
    ok &= orient_ok;
    notes.push(format!("orientation {} on {} parts", if orient_ok { "ok" } else { "FAILED" }, layout.parts.len()));

    // Lens round trip on a smooth field at the default coefficients.
    let mut f = ThermalFrame::filled(160, 120, 0.0);
    for y in 0..120 {
        for x in 0..160 {
            let (u, v) = (x as f64 / 160.0, y as f64 / 120.0);
            f.data[y * 160 + x] = 150.0 + 25.0 * (2.5 * u + 0.3).sin() * (1.7 * v).cos() + 8.0 * u * v;
        }
    }
    let back = undistort(&distort(&f, 0.02, 0.005), 0.02, 0.005).unwrap();
    let lens = f.data.iter().zip(&back.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ok &= lens <= 0.5;
    notes.push(format!("undistort∘distort max error {lens:.3} °C"));

    // Split disjointness on the protocol dataset.
    let builds = |idx: &[usize]| idx.iter().map(|&i| ds.records[i].build_id).collect::<BTreeSet<_>>();
    let parts = |idx: &[usize]| idx.iter().map(|&i| (ds.records[i].build_id, ds.records[i].part_id)).collect::<BTreeSet<_>>();
    let s = &ds.split;
    let ids: Vec<u32> = ds.records.iter().map(|r| r.build_id).collect();
    let resplit = split_by_build(&ids, SplitRatios { train: 0.78, val: 0.09, test: 0.13 }, 0).unwrap();
    let split_ok = builds(&s.test).is_disjoint(&builds(&s.train))
        && builds(&s.test).is_disjoint(&builds(&s.val))
        && parts(&s.train).is_disjoint(&parts(&s.val))
        && parts(&s.train).len() + parts(&s.val).len() + parts(&s.test).len() == ds.records.len()
        && resplit == *s;
    ok &= split_ok;
    notes.push(format!("split disjoint {split_ok}"));

    // Checkpoint round trips of trained models.
    let dir = tempfile::tempdir().unwrap();
    let (rp, pp) = (dir.path().join("vae.thck"), dir.path().join("latent.thck"));
    save_checkpoint(&rp, &Checkpoint::recon(vae.clone(), 0, "acceptance")).unwrap();
    save_checkpoint(&pp, &Checkpoint::predictor(predictor.clone(), 0)).unwrap();
    let vae2 = load_checkpoint(&rp).unwrap().into_recon().unwrap();
    let pred2 = load_checkpoint(&pp).unwrap().into_predictor().unwrap();
    let probe = vols(ds, &ds.split.test[..8]);
    let inputs: Vec<PartInput> = ds.split.test[..8].iter().map(|&i| input(ds, i, ModelVariant::LatentThermal)).collect();
    let bits = |q: &[thermonet::types::QualityVector]| q.iter().flat_map(|v| v.to_array().map(f64::to_bits)).collect::<Vec<_>>();
    let ck_ok = vae2.reconstruct(&probe).unwrap() == vae.reconstruct(&probe).unwrap()
        && bits(&pred2.predict(&inputs).unwrap()) == bits(&predictor.predict(&inputs).unwrap());
    ok &= ck_ok;
    notes.push(format!("checkpoint bit-exact {ck_ok}"));

    check(ok, notes.join("; "))
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |id: u32, name: &'static str, o: Outcome| {
        let (tag, detail) = match &o {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("[{tag}] {id:>2} {name}: {detail}");
        results.push((id, name, o));
    };

    report(1, "gradient fidelity", gradient_fidelity());
    report(2, "conv3d equivalence", conv_equivalence());
    report(3, "KLD correctness", kld_correctness());
    report(8, "correlation reproduction", correlation());
    report(9, "determinism", determinism());
    report(7, "geometry variant", geometry_variant());

    let ds = protocol_dataset();
    let (o4, vae) = reconstruction(&ds);
    report(4, "reconstruction", o4);
    let (o5, latent) = variant_ordering(&ds, &vae);
    report(5, "variant ordering", o5);
    report(6, "latent sweep", latent_sweep(&ds));
    report(10, "inference speed", inference_speed(&ds, &latent));
    report(11, "pipeline invariants", pipeline_invariants(&ds, &vae, &latent));

    results.sort_by_key(|r| r.0);
    let failed: Vec<u32> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!(
        "acceptance: {} of {} criteria passed in {:.0} s",
        results.len() - failed.len(),
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
