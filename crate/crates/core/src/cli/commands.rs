use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::formats::{
    load_checkpoint, read_bytes, read_verified, save_checkpoint, sha256_hex, to_json, write_atomic,
    BlobData, VoxelBlob,
};
use crate::evalreport::{
    adp, emit_report, pearson, sig6, svg, Correlation, EvalReport, PartRow, SummaryRow, VariantRows,
};
use crate::models::{
    build_predictor, build_recon_model, pretrain_recon_with, recon_adp, train_predictor, ArchSpec, Checkpoint,
    EncoderMode, Example, ModelVariant, PartInput, Predictor, ReconHistory, ReconKind, ReconModel,
};
use crate::preprocess::{
    finish_dataset, process_build, Dataset, GeometryVoxel, PartRecord, PreprocessOptions, Split, Standardizer,
    ThermalVoxel,
};
use crate::synthbed::{
    generate_build, BedLayout, BuildData, FieldValue, JobConfig, PartTruth, TelemetryRecord, ThermalFrame,
    TELEMETRY_FIELDS,
};
use crate::types::QualityVector;
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Where every command reads and writes, plus flag overrides.
#[derive(Clone, Debug)]
pub struct Context {
    pub out: PathBuf,
    pub config: ExperimentConfig,
    /// Restricts train/eval to these variants when non-empty.
    pub variants: Vec<ModelVariant>,
    pub quiet: bool,
}

impl Context {
    pub fn new(out: impl Into<PathBuf>, config: ExperimentConfig) -> Self {
        Self {
            out: out.into(),
            config,
            variants: Vec::new(),
            quiet: false,
        }
    }

    pub fn dir(&self, stage: &str) -> PathBuf {
        self.out.join(stage)
    }

    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn variants(&self) -> Vec<ModelVariant> {
        if self.variants.is_empty() {
            self.config.predictor.variants.clone()
        } else {
            self.variants.clone()
        }
    }

    fn latent(&self) -> usize {
        self.config.recon.latent
    }
}

/// Build a directory under a sibling staging name, then swap it into place.
fn staged<T>(target: &Path, fill: impl FnOnce(&Path) -> Result<T>) -> Result<T> {
    let mut name = target.as_os_str().to_owned();
    name.push(".partial");
    let staging = PathBuf::from(name);
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    let value = match fill(&staging) {
        Ok(v) => v,
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
    };
    if target.exists() {
        fs::remove_dir_all(target).map_err(|e| Error::io(target, e))?;
    }
    fs::rename(&staging, target).map_err(|e| Error::io(target, e))?;
    Ok(value)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<String> {
    write_atomic(path, bytes)?;
    Ok(sha256_hex(bytes))
}

// ---------------------------------------------------------------- synth

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildEntry {
    pub build_id: u32,
    pub printer_id: u32,
    pub parts: usize,
    /// File name within the build directory → SHA-256.
    pub files: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthManifest {
    pub format_version: u32,
    pub seed: u64,
    /// Frame stacks are stored as (frame, row, column) blobs.
    pub frame_axes: String,
    pub builds: Vec<BuildEntry>,
    pub parts: usize,
    pub printers: usize,
    pub config: ExperimentConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SynthSummary {
    pub builds: usize,
    pub parts: usize,
    pub printers: usize,
}

fn build_dir_name(build_id: u32) -> String {
    format!("build_{build_id:04}")
}

fn telemetry_csv(records: &[TelemetryRecord]) -> String {
    let mut s = TELEMETRY_FIELDS.join(",");
    s.push('\n');
    for r in records {
        let row: Vec<String> = r.fields.iter().map(|(_, v)| v.render()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn parse_telemetry(text: &str, path: &Path) -> Result<Vec<TelemetryRecord>> {
    let bad = |d: String| Error::Format {
        path: path.to_path_buf(),
        detail: d,
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty telemetry".into()))?.split(',').collect();
    lines
        .enumerate()
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != header.len() {
                return Err(bad(format!("row {} has {} cells, header has {}", i + 1, cells.len(), header.len())));
            }
            let fields = header
                .iter()
                .zip(cells)
                .map(|(k, v)| {
                    let value = match v.parse::<f64>() {
                        Ok(x) => FieldValue::Num(x),
                        Err(_) => FieldValue::Text(v.to_string()),
                    };
                    (k.to_string(), value)
                })
                .collect();
            Ok(TelemetryRecord { fields })
        })
        .collect()
}

fn frames_blob(build: &BuildData) -> Result<VoxelBlob> {
    let (w, h) = (build.layout.bed_w, build.layout.bed_h);
    let mut data = Vec::with_capacity(build.frames.len() * w * h);
    for f in &build.frames {
        data.extend(f.data.iter().map(|&v| v as f32));
    }
    VoxelBlob::new([build.frames.len(), h, w], BlobData::F32(data))
}

/// Simulate every build of the campaign and write it under `<out>/synth`.
pub fn cmd_synth(ctx: &Context) -> Result<SynthSummary> {
    let cfg = &ctx.config;
    cfg.validate()?;
    let s = &cfg.synth;
    let target = ctx.dir("synth");
    let manifest = staged(&target, |dir| {
        let mut builds = Vec::with_capacity(s.builds);
        let mut parts = 0;
        for i in 0..s.builds {
            let (layout, job) = s.job(cfg.seed, i);
            let b = generate_build(&layout, &job)?;
            let bdir = dir.join(build_dir_name(job.build_id));
            let mut files = BTreeMap::new();
            let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
                files.insert(name.to_string(), write_file(&bdir.join(name), bytes)?);
                Ok(())
            };
            put("layout.toml", b.layout.to_toml().as_bytes())?;
            put("job.json", &to_json(&b.config))?;
            put("telemetry.csv", telemetry_csv(&b.telemetry).as_bytes())?;
            put("truths.json", &to_json(&b.truths))?;
            put("frames.thvx", &frames_blob(&b)?.encode())?;
            parts += b.layout.parts.len();
            ctx.log(format!("synth: build {} with {} parts", job.build_id, b.layout.parts.len()));
            builds.push(BuildEntry {
                build_id: job.build_id,
                printer_id: job.printer_id,
                parts: b.layout.parts.len(),
                files,
            });
        }
        let printers = builds.iter().map(|b| b.printer_id).collect::<std::collections::BTreeSet<_>>().len();
        let m = SynthManifest {
            format_version: FORMAT_VERSION,
            seed: cfg.seed,
            frame_axes: "frame, row (y), column (x)".into(),
            builds,
            parts,
            printers,
            config: cfg.clone(),
        };
        write_file(&dir.join("manifest.json"), &to_json(&m))?;
        Ok(m)
    })?;
    load_synth_manifest(&ctx.out)?;
    Ok(SynthSummary {
        builds: manifest.builds.len(),
        parts: manifest.parts,
        printers: manifest.printers,
    })
}

pub fn load_synth_manifest(out: &Path) -> Result<(SynthManifest, String)> {
    let path = out.join("synth").join("manifest.json");
    let bytes = read_bytes(&path)?;
    let m: SynthManifest = serde_json::from_slice(&bytes).map_err(|e| Error::Format {
        path: path.clone(),
        detail: e.to_string(),
    })?;
    Ok((m, sha256_hex(&bytes)))
}

/// Read one synthesized build back, checking every file's hash.
pub fn load_build(out: &Path, entry: &BuildEntry) -> Result<BuildData> {
    let dir = out.join("synth").join(build_dir_name(entry.build_id));
    let file = |name: &str| -> Result<(PathBuf, Vec<u8>)> {
        let path = dir.join(name);
        let expected = entry.files.get(name).ok_or_else(|| Error::Format {
            path: path.clone(),
            detail: "not listed in the synth manifest".into(),
        })?;
        let bytes = read_verified(&path, expected)?;
        Ok((path, bytes))
    };
    let text = |p: &Path, b: Vec<u8>| {
        String::from_utf8(b).map_err(|_| Error::Format {
            path: p.to_path_buf(),
            detail: "not UTF-8".into(),
        })
    };
    let json_err = |p: &Path, e: serde_json::Error| Error::Format {
        path: p.to_path_buf(),
        detail: e.to_string(),
    };
    let (p, b) = file("layout.toml")?;
    let layout = BedLayout::from_toml(&text(&p, b)?)?;
    let (p, b) = file("job.json")?;
    let config: JobConfig = serde_json::from_slice(&b).map_err(|e| json_err(&p, e))?;
    let (p, b) = file("telemetry.csv")?;
    let telemetry = parse_telemetry(&text(&p, b)?, &p)?;
    let (p, b) = file("truths.json")?;
    let truths: Vec<PartTruth> = serde_json::from_slice(&b).map_err(|e| json_err(&p, e))?;
    let (p, b) = file("frames.thvx")?;
    let blob = VoxelBlob::decode(&b, &p)?;
    let [n, h, w] = blob.dims_usize();
    if (w, h) != (layout.bed_w, layout.bed_h) {
        return Err(Error::Format {
            path: p,
            detail: format!("frames are {w}x{h}, layout bed is {}x{}", layout.bed_w, layout.bed_h),
        });
    }
    let per_layer = config.frames_per_layer.max(1);
    let values = blob.data.to_f64();
    let frames = values
        .chunks_exact(w * h)
        .enumerate()
        .map(|(i, c)| ThermalFrame {
            width: w,
            height: h,
            layer: i / per_layer,
            frame: i % per_layer,
            data: c.to_vec(),
        })
        .collect::<Vec<_>>();
    debug_assert_eq!(frames.len(), n);
    Ok(BuildData {
        layout,
        config,
        frames,
        telemetry,
        truths,
    })
}

// ----------------------------------------------------------- preprocess

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobRef {
    /// Relative to the dataset directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartEntry {
    pub key: String,
    pub split: String,
    pub record: PartRecord,
    pub voxel: BlobRef,
    pub geometry: Option<BlobRef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisConvention {
    pub thermal: String,
    pub geometry: String,
}

impl Default for AxisConvention {
    fn default() -> Self {
        Self {
            thermal: "W = part width (18, bed x for horizontal parts), L = part length (35, bed y for horizontal parts), \
                      H = layer (7, bottom first); row-major, H fastest"
                .into(),
            geometry: "cube centred on the part; W, L, H follow the thermal axes; 0 = powder, 255 = part".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub seed: u64,
    pub synth_manifest_sha256: String,
    pub axes: AxisConvention,
    pub options: PreprocessOptions,
    pub standardizer: Standardizer,
    pub parts: Vec<PartEntry>,
    pub config: ExperimentConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetSummary {
    pub parts: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

pub fn part_key(build_id: u32, part_id: u32) -> String {
    format!("b{build_id:04}_p{part_id:04}")
}

fn split_names(split: &Split, n: usize) -> Vec<&'static str> {
    let mut names = vec![""; n];
    for (list, name) in [(&split.train, "train"), (&split.val, "val"), (&split.test, "test")] {
        for &i in list {
            names[i] = name;
        }
    }
    names
}

/// Undistort, crop and encode every synthesized part into `<out>/dataset`.
pub fn cmd_preprocess(ctx: &Context) -> Result<DatasetSummary> {
    let cfg = &ctx.config;
    cfg.validate()?;
    let (synth, synth_hash) = load_synth_manifest(&ctx.out)?;
    let opts = cfg.preprocess_options();
    let mut records = Vec::new();
    let mut voxels = Vec::new();
    let mut geometry = Vec::new();
    for entry in &synth.builds {
        let b = load_build(&ctx.out, entry)?;
        let (r, v, g) = process_build(&b, &opts)?;
        records.extend(r);
        voxels.extend(v);
        geometry.extend(g);
        ctx.log(format!("preprocess: build {}", entry.build_id));
    }
    let ds = finish_dataset(records, voxels, geometry, &opts)?;
    let names = split_names(&ds.split, ds.records.len());
    staged(&ctx.dir("dataset"), |dir| {
        let mut parts = Vec::with_capacity(ds.records.len());
        for (i, rec) in ds.records.iter().enumerate() {
            let key = part_key(rec.build_id, rec.part_id);
            let vpath = format!("voxels/{key}.thvx");
            let blob = VoxelBlob::from_f64(ThermalVoxel::SHAPE, &ds.voxels[i].data)?;
            let voxel = BlobRef {
                sha256: write_file(&dir.join(&vpath), &blob.encode())?,
                path: vpath,
            };
            let geometry = match ds.geometry.get(i) {
                Some(g) => {
                    let gpath = format!("geometry/{key}.thvx");
                    let blob = VoxelBlob::new([g.edge; 3], BlobData::U8(g.data.clone()))?;
                    Some(BlobRef {
                        sha256: write_file(&dir.join(&gpath), &blob.encode())?,
                        path: gpath,
                    })
                }
                None => None,
            };
            parts.push(PartEntry {
                key,
                split: names[i].to_string(),
                record: rec.clone(),
                voxel,
                geometry,
            });
        }
        let m = DatasetManifest {
            format_version: FORMAT_VERSION,
            seed: cfg.seed,
            synth_manifest_sha256: synth_hash.clone(),
            axes: AxisConvention::default(),
            options: opts.clone(),
            standardizer: ds.standardizer.clone(),
            parts,
            config: cfg.clone(),
        };
        write_file(&dir.join("manifest.json"), &to_json(&m))?;
        Ok(())
    })?;
    let loaded = load_dataset(&ctx.out)?;
    let s = &loaded.dataset.split;
    let summary = DatasetSummary {
        parts: loaded.dataset.records.len(),
        train: s.train.len(),
        val: s.val.len(),
        test: s.test.len(),
    };
    ctx.log(format!(
        "preprocess: {} parts ({} train / {} val / {} test)",
        summary.parts, summary.train, summary.val, summary.test
    ));
    Ok(summary)
}

/// A dataset read back from disk with every blob verified.
#[derive(Clone, Debug)]
pub struct LoadedDataset {
    pub dataset: Dataset,
    pub manifest: DatasetManifest,
    /// SHA-256 of `manifest.json`; models trained on it carry this reference.
    pub hash: String,
}

impl LoadedDataset {
    pub fn thermal(&self, i: usize) -> &[f64] {
        &self.dataset.voxels[i].data
    }

    pub fn has_geometry(&self) -> bool {
        !self.dataset.geometry.is_empty()
    }
}

pub fn load_dataset(out: &Path) -> Result<LoadedDataset> {
    let dir = out.join("dataset");
    let path = dir.join("manifest.json");
    let bytes = read_bytes(&path)?;
    let hash = sha256_hex(&bytes);
    let manifest: DatasetManifest = serde_json::from_slice(&bytes).map_err(|e| Error::Format {
        path: path.clone(),
        detail: e.to_string(),
    })?;
    let mut split = Split::default();
    let mut records = Vec::with_capacity(manifest.parts.len());
    let mut voxels = Vec::with_capacity(manifest.parts.len());
    let mut geometry = Vec::new();
    for (i, p) in manifest.parts.iter().enumerate() {
        match p.split.as_str() {
            "train" => split.train.push(i),
            "val" => split.val.push(i),
            "test" => split.test.push(i),
            other => {
                return Err(Error::Format {
                    path: path.clone(),
                    detail: format!("part {} has unknown split `{other}`", p.key),
                })
            }
        }
        let vpath = dir.join(&p.voxel.path);
        let blob = VoxelBlob::decode(&read_verified(&vpath, &p.voxel.sha256)?, &vpath)?;
        if blob.dims_usize() != ThermalVoxel::SHAPE {
            return Err(Error::Format {
                path: vpath,
                detail: format!("dims {:?}, expected {:?}", blob.dims, ThermalVoxel::SHAPE),
            });
        }
        voxels.push(ThermalVoxel {
            part_id: p.record.part_id,
            build_id: p.record.build_id,
            printer_id: p.record.printer_id,
            data: blob.data.to_f64(),
        });
        if let Some(g) = &p.geometry {
            let gpath = dir.join(&g.path);
            let blob = VoxelBlob::decode(&read_verified(&gpath, &g.sha256)?, &gpath)?;
            let BlobData::U8(data) = blob.data else {
                return Err(Error::Format {
                    path: gpath,
                    detail: "geometry blob must hold unsigned bytes".into(),
                });
            };
            geometry.push(GeometryVoxel {
                part_id: p.record.part_id,
                edge: blob.dims[0] as usize,
                data,
            });
        }
        records.push(p.record.clone());
    }
    Ok(LoadedDataset {
        dataset: Dataset {
            records,
            voxels,
            geometry,
            split,
            standardizer: manifest.standardizer.clone(),
        },
        manifest,
        hash,
    })
}

// ------------------------------------------------------------- pretrain

/// Which volumes a reconstruction model consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VolumeSource {
    Thermal,
    Geometry,
}

fn recon_stem(source: VolumeSource, kind: ReconKind, latent: usize) -> String {
    match source {
        VolumeSource::Thermal => format!("{}_d{latent}", kind.as_str()),
        VolumeSource::Geometry => format!("geometry_{}_d{latent}", kind.as_str()),
    }
}

pub fn recon_checkpoint_path(out: &Path, source: VolumeSource, kind: ReconKind, latent: usize) -> PathBuf {
    out.join("pretrain").join(format!("{}.thck", recon_stem(source, kind, latent)))
}

fn volumes(ds: &LoadedDataset, source: VolumeSource) -> Vec<Vec<f64>> {
    match source {
        VolumeSource::Thermal => ds.dataset.voxels.iter().map(|v| v.data.clone()).collect(),
        VolumeSource::Geometry => ds
            .dataset
            .geometry
            .iter()
            .map(|g| g.data.iter().map(|&b| b as f64).collect())
            .collect(),
    }
}

fn pick<'a>(all: &'a [Vec<f64>], idx: &[usize]) -> Vec<&'a [f64]> {
    idx.iter().map(|&i| all[i].as_slice()).collect()
}

/// Mean per-volume ADP of predicting every volume by the voxelwise mean of `train`.
pub fn mean_image_adp(train: &[&[f64]], eval: &[&[f64]]) -> Result<f64> {
    let Some(first) = train.first() else {
        return Err(Error::InvalidArgument("mean image of an empty split".into()));
    };
    let mut mean = vec![0.0; first.len()];
    for v in train {
        mean.iter_mut().zip(v.iter()).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= train.len() as f64);
    let total = eval.iter().map(|v| adp(v, &mean)).sum::<Result<f64>>()?;
    Ok(total / eval.len().max(1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconResult {
    pub kind: ReconKind,
    pub input: String,
    pub latent: usize,
    pub best_epoch: usize,
    pub val_adp: f64,
    pub test_adp: f64,
    /// Mean-image predictor ADP on the test split.
    pub baseline_test_adp: f64,
    pub seconds: f64,
    pub history: ReconHistory,
}

/// Train one reconstruction model and write its checkpoint and curve.
pub fn pretrain_one(
    ctx: &Context,
    ds: &LoadedDataset,
    source: VolumeSource,
    kind: ReconKind,
    latent: usize,
) -> Result<ReconResult> {
    let all = volumes(ds, source);
    if all.is_empty() {
        return Err(Error::InvalidArgument(
            "dataset has no geometry cubes; set preprocess.roi_edge and rerun preprocess".into(),
        ));
    }
    let s = &ds.dataset.split;
    let (train, val, test) = (pick(&all, &s.train), pick(&all, &s.val), pick(&all, &s.test));
    let arch = match source {
        VolumeSource::Thermal => ArchSpec::thermal(kind, latent),
        VolumeSource::Geometry => {
            let edge = ds.dataset.geometry[0].edge;
            ArchSpec::geometry(kind, latent, edge)
        }
    };
    let cfg = ctx.config.recon_train(latent);
    let mut model = build_recon_model(arch, cfg.seed)?;
    let stem = recon_stem(source, kind, latent);
    let start = std::time::Instant::now();
    let history = pretrain_recon_with(&mut model, &train, &val, &cfg, |e, loss, v| {
        ctx.log(format!("pretrain {stem}: epoch {e} loss {loss:.4} val ADP {v:.4}"))
    })?;
    let seconds = start.elapsed().as_secs_f64();
    let result = ReconResult {
        kind,
        input: match source {
            VolumeSource::Thermal => "thermal".into(),
            VolumeSource::Geometry => "geometry".into(),
        },
        latent,
        best_epoch: history.best_epoch,
        val_adp: history.val_adp.get(history.best_epoch).copied().unwrap_or(f64::NAN),
        test_adp: recon_adp(&model, &test)?,
        baseline_test_adp: mean_image_adp(&train, &test)?,
        seconds,
        history,
    };
    let path = recon_checkpoint_path(&ctx.out, source, kind, latent);
    save_checkpoint(&path, &Checkpoint::recon(model, cfg.seed, ds.hash.clone()))?;
    let dir = ctx.dir("pretrain");
    write_atomic(&dir.join(format!("{stem}_history.csv")), recon_history_csv(&result.history).as_bytes())?;
    // Wall time varies between runs, so it is kept out of the byte-stable files.
    let mut stable = result.clone();
    stable.seconds = 0.0;
    write_atomic(&dir.join(format!("{stem}.json")), &to_json(&stable))?;
    ctx.log(format!(
        "pretrain {stem}: test ADP {:.4} (mean-image baseline {:.4}) in {:.0} s",
        result.test_adp, result.baseline_test_adp, seconds
    ));
    Ok(result)
}

fn recon_history_csv(h: &ReconHistory) -> String {
    let mut s = String::from("epoch,train_loss,val_adp\n");
    for (e, (l, a)) in h.train_loss.iter().zip(&h.val_adp).enumerate() {
        writeln!(s, "{e},{},{}", sig6(*l), sig6(*a)).unwrap();
    }
    s
}

/// Pretrain every configured reconstruction kind on the thermal voxels, and
/// on the geometry cubes when the dataset has them.
pub fn cmd_pretrain(ctx: &Context) -> Result<Vec<ReconResult>> {
    ctx.config.validate()?;
    let ds = load_dataset(&ctx.out)?;
    let mut out = Vec::new();
    for &kind in &ctx.config.recon.kinds {
        out.push(pretrain_one(ctx, &ds, VolumeSource::Thermal, kind, ctx.latent())?);
    }
    if ds.has_geometry() {
        for &kind in &ctx.config.recon.kinds {
            out.push(pretrain_one(ctx, &ds, VolumeSource::Geometry, kind, ctx.latent())?);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- train

fn predictor_stem(variant: ModelVariant, latent: usize, mode: EncoderMode) -> String {
    if variant.needs_encoder() {
        let m = match mode {
            EncoderMode::Frozen => "frozen",
            EncoderMode::Finetune => "finetune",
        };
        format!("{}_d{latent}_{m}", variant.as_str())
    } else {
        variant.as_str().to_string()
    }
}

pub fn predictor_checkpoint_path(out: &Path, variant: ModelVariant, latent: usize, mode: EncoderMode) -> PathBuf {
    out.join("train").join(format!("{}.thck", predictor_stem(variant, latent, mode)))
}

fn source_of(variant: ModelVariant) -> VolumeSource {
    match variant {
        ModelVariant::GeometryLatent => VolumeSource::Geometry,
        _ => VolumeSource::Thermal,
    }
}

/// Load a pretrained encoder and refuse it if it was trained on other data.
pub fn load_encoder(ctx: &Context, ds: &LoadedDataset, source: VolumeSource, latent: usize) -> Result<ReconModel> {
    let kind = ctx.config.predictor.encoder_kind;
    let path = recon_checkpoint_path(&ctx.out, source, kind, latent);
    let ck = load_checkpoint(&path)?;
    if ck.stats_ref != ds.hash {
        return Err(Error::HashMismatch {
            path,
            expected: ds.hash.clone(),
            found: ck.stats_ref,
        });
    }
    ck.into_recon().ok_or_else(|| Error::Format {
        path: recon_checkpoint_path(&ctx.out, source, kind, latent),
        detail: "checkpoint holds a predictor, expected a reconstruction model".into(),
    })
}

/// Volumes the predictor of `variant` consumes, record-aligned.
pub fn variant_volumes(ds: &LoadedDataset, variant: ModelVariant) -> Vec<Vec<f64>> {
    match variant {
        ModelVariant::NoThermal => vec![Vec::new(); ds.dataset.records.len()],
        v => volumes(ds, source_of(v)),
    }
}

pub fn examples<'a>(ds: &'a LoadedDataset, vols: &'a [Vec<f64>], idx: &[usize]) -> Vec<Example<'a>> {
    idx.iter()
        .map(|&i| Example {
            input: PartInput {
                features: &ds.dataset.records[i].features,
                volume: &vols[i],
            },
            target: ds.dataset.records[i].target,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainResult {
    pub variant: ModelVariant,
    pub path: PathBuf,
    pub best_epoch: usize,
}

pub fn train_one(
    ctx: &Context,
    ds: &LoadedDataset,
    variant: ModelVariant,
    latent: usize,
    encoder: Option<ReconModel>,
) -> Result<(Predictor, TrainResult)> {
    let mode = ctx.config.predictor.encoder_mode;
    let cfg = ctx.config.predictor_train(mode);
    let encoder = match (variant.needs_encoder(), encoder) {
        (true, None) => Some(load_encoder(ctx, ds, source_of(variant), latent)?),
        (_, e) => e,
    };
    let mut model = build_predictor(variant, encoder, ds.dataset.feature_dim(), ctx.config.predictor.hidden, cfg.seed)?;
    let vols = variant_volumes(ds, variant);
    let s = &ds.dataset.split;
    let (train, val) = (examples(ds, &vols, &s.train), examples(ds, &vols, &s.val));
    let history = train_predictor(&mut model, &train, &val, &cfg)?;
    model.stats_ref = ds.hash.clone();
    let stem = predictor_stem(variant, latent, mode);
    let path = predictor_checkpoint_path(&ctx.out, variant, latent, mode);
    save_checkpoint(&path, &Checkpoint::predictor(model.clone(), cfg.seed))?;
    let mut csv = String::from("epoch,train_loss,val_loss\n");
    for (e, (t, v)) in history.train_loss.iter().zip(&history.val_loss).enumerate() {
        writeln!(csv, "{e},{},{}", sig6(*t), sig6(*v)).unwrap();
    }
    write_atomic(&ctx.dir("train").join(format!("{stem}_history.csv")), csv.as_bytes())?;
    ctx.log(format!("train {stem}: best epoch {}", history.best_epoch));
    Ok((
        model,
        TrainResult {
            variant,
            path,
            best_epoch: history.best_epoch,
        },
    ))
}

/// Train every requested predictor variant.
pub fn cmd_train(ctx: &Context) -> Result<Vec<TrainResult>> {
    ctx.config.validate()?;
    let ds = load_dataset(&ctx.out)?;
    ctx.variants()
        .into_iter()
        .map(|v| train_one(ctx, &ds, v, ctx.latent(), None).map(|(_, r)| r))
        .collect()
}

// ----------------------------------------------------------------- eval

/// Per-part rows of `model` on the records `idx`.
pub fn evaluate_predictor(model: &Predictor, ds: &LoadedDataset, idx: &[usize]) -> Result<Vec<PartRow>> {
    model.check_stats(&ds.hash)?;
    let vols = variant_volumes(ds, model.spec.variant);
    let inputs: Vec<PartInput> = idx
        .iter()
        .map(|&i| PartInput {
            features: &ds.dataset.records[i].features,
            volume: &vols[i],
        })
        .collect();
    let preds = model.predict(&inputs)?;
    let adps: Vec<Option<f64>> = match &model.encoder {
        Some(enc) => {
            let v = pick(&vols, idx);
            let recon = enc.reconstruct(&v)?;
            recon.iter().zip(&v).map(|(r, x)| adp(r, x).map(Some)).collect::<Result<_>>()?
        }
        None => vec![None; idx.len()],
    };
    Ok(idx
        .iter()
        .zip(preds)
        .zip(adps)
        .map(|((&i, pred), adp)| {
            let r = &ds.dataset.records[i];
            PartRow {
                build_id: r.build_id,
                part_id: r.part_id,
                bed_x: r.bed_x,
                bed_y: r.bed_y,
                bed_z: r.bed_z,
                truth: r.target,
                pred,
                adp,
            }
        })
        .collect())
}

/// Pearson r of each aggregated temperature against each target over all parts.
pub fn thermal_correlations(ds: &LoadedDataset) -> Result<Vec<Correlation>> {
    let recs = &ds.dataset.records;
    let feats: [(&str, fn(&PartRecord) -> f64); 3] = [
        ("min_temp", |r| r.aggregates.min),
        ("mean_temp", |r| r.aggregates.mean),
        ("max_temp", |r| r.aggregates.max),
    ];
    let mut out = Vec::new();
    for (fname, f) in feats {
        let x: Vec<f64> = recs.iter().map(f).collect();
        for (k, tname) in QualityVector::NAMES.iter().enumerate() {
            let y: Vec<f64> = recs.iter().map(|r| r.target.to_array()[k]).collect();
            if let Ok(r) = pearson(&x, &y) {
                out.push(Correlation {
                    feature: fname.into(),
                    target: tname.to_string(),
                    r,
                    n: x.len(),
                });
            }
        }
    }
    Ok(out)
}

/// Evaluate every requested variant on the test split into `<out>/eval`.
pub fn cmd_eval(ctx: &Context) -> Result<Vec<SummaryRow>> {
    ctx.config.validate()?;
    let ds = load_dataset(&ctx.out)?;
    let mode = ctx.config.predictor.encoder_mode;
    let mut variants = Vec::new();
    for v in ctx.variants() {
        let path = predictor_checkpoint_path(&ctx.out, v, ctx.latent(), mode);
        let model = load_checkpoint(&path)?.into_predictor().ok_or_else(|| Error::Format {
            path: path.clone(),
            detail: "checkpoint holds a reconstruction model, expected a predictor".into(),
        })?;
        variants.push(VariantRows {
            variant: v.as_str().into(),
            rows: evaluate_predictor(&model, &ds, &ds.dataset.split.test)?,
        });
    }
    let report = EvalReport {
        variants,
        correlations: thermal_correlations(&ds)?,
        bed: bed_of(&ds),
    };
    let summary = report.summary()?;
    staged(&ctx.dir("eval"), |dir| emit_report(&report, dir).map(|_| ()))?;
    for row in &summary {
        ctx.log(format!(
            "eval {}: mean dimensional % error {:.4}",
            row.variant,
            row.mean_dimensional_error()
        ));
    }
    Ok(summary)
}

fn bed_of(ds: &LoadedDataset) -> [usize; 2] {
    let s = &ds.manifest.config.synth;
    [s.bed_w, s.bed_h]
}

// ---------------------------------------------------------------- sweep

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub latent: usize,
    pub recon_test_adp: f64,
    pub summary: SummaryRow,
}

/// Latent-thermal predictors at every configured latent size, pretraining
/// any encoder that is not already on disk.
pub fn cmd_sweep(ctx: &Context) -> Result<Vec<SweepRow>> {
    ctx.config.validate()?;
    let ds = load_dataset(&ctx.out)?;
    let kind = ctx.config.predictor.encoder_kind;
    let mut rows = Vec::new();
    let mut variants = Vec::new();
    for &d in &ctx.config.sweep.latents {
        let encoder = match load_encoder(ctx, &ds, VolumeSource::Thermal, d) {
            Ok(e) => e,
            Err(Error::MissingArtifact(_)) => {
                pretrain_one(ctx, &ds, VolumeSource::Thermal, kind, d)?;
                load_encoder(ctx, &ds, VolumeSource::Thermal, d)?
            }
            Err(e) => return Err(e),
        };
        let (model, _) = train_one(ctx, &ds, ModelVariant::LatentThermal, d, Some(encoder))?;
        let part_rows = evaluate_predictor(&model, &ds, &ds.dataset.split.test)?;
        let name = format!("latent-thermal-d{d}");
        let v = VariantRows {
            variant: name,
            rows: part_rows,
        };
        let adps: Vec<f64> = v.rows.iter().filter_map(|r| r.adp).collect();
        variants.push(v);
        let report = EvalReport {
            variants: vec![variants.last().unwrap().clone()],
            correlations: vec![],
            bed: bed_of(&ds),
        };
        rows.push(SweepRow {
            latent: d,
            recon_test_adp: adps.iter().sum::<f64>() / adps.len().max(1) as f64,
            summary: report.summary()?.remove(0),
        });
    }
    let report = EvalReport {
        variants,
        correlations: vec![],
        bed: bed_of(&ds),
    };
    staged(&ctx.dir("sweep"), |dir| {
        emit_report(&report, dir)?;
        write_atomic(&dir.join("sweep.csv"), sweep_csv(&rows).as_bytes())
    })?;
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("# pct error = mean absolute percent error on the test split; std = population standard deviation\n");
    s.push_str("latent,recon_test_adp");
    for t in QualityVector::NAMES {
        write!(s, ",{t}_pct_error,{t}_std").unwrap();
    }
    s.push_str(",mean_dimensional_pct_error\n");
    for r in rows {
        write!(s, "{},{}", r.latent, sig6(r.recon_test_adp)).unwrap();
        for st in &r.summary.stats {
            write!(s, ",{},{}", sig6(st.mean), sig6(st.std)).unwrap();
        }
        writeln!(s, ",{}", sig6(r.summary.mean_dimensional_error())).unwrap();
    }
    s
}

// ----------------------------------------------------------------- plot

fn read_curve(path: &Path) -> Result<Vec<f64>> {
    let text = String::from_utf8(read_bytes(path)?).unwrap_or_default();
    text.lines()
        .skip(1)
        .map(|l| {
            l.rsplit(',').next().and_then(|v| v.parse().ok()).ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                detail: format!("bad row `{l}`"),
            })
        })
        .collect()
}

/// Figures from whatever upstream results exist: reconstruction ADP curves,
/// the temperature-density correlation, and target distributions.
pub fn cmd_plot(ctx: &Context) -> Result<Vec<PathBuf>> {
    let ds = load_dataset(&ctx.out)?;
    let mut curves = Vec::new();
    let pdir = ctx.dir("pretrain");
    if pdir.is_dir() {
        let mut names: Vec<String> = fs::read_dir(&pdir)
            .map_err(|e| Error::io(&pdir, e))?
            .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
            .filter(|n| n.ends_with("_history.csv"))
            .collect();
        names.sort();
        for n in names {
            let curve = read_curve(&pdir.join(&n))?;
            curves.push((n.trim_end_matches("_history.csv").to_string(), curve));
        }
    }
    let recs = &ds.dataset.records;
    let points: Vec<(f64, f64)> = recs.iter().map(|r| (r.aggregates.min, r.target.density)).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let r = pearson(&xs, &ys).unwrap_or(f64::NAN);
    let mut corr_data = String::from("min_temp,density\n");
    for (x, y) in &points {
        writeln!(corr_data, "{},{}", sig6(*x), sig6(*y)).unwrap();
    }
    let mut dist_data = String::from("target,rank,value\n");
    let mut dist = Vec::new();
    for (k, name) in QualityVector::NAMES.iter().enumerate() {
        let mut v: Vec<f64> = recs.iter().map(|r| r.target.to_array()[k]).collect();
        v.sort_by(f64::total_cmp);
        let (lo, hi) = (v[0], v[v.len() - 1]);
        let norm: Vec<f64> = v.iter().map(|x| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 }).collect();
        for (i, x) in v.iter().enumerate() {
            writeln!(dist_data, "{name},{i},{}", sig6(*x)).unwrap();
        }
        dist.push((format!("{name} [{}, {}]", sig6(lo), sig6(hi)), norm));
    }
    staged(&ctx.dir("plots"), |dir| {
        let mut files = Vec::new();
        let mut put = |name: &str, text: String| -> Result<()> {
            let p = dir.join(name);
            write_atomic(&p, text.as_bytes())?;
            files.push(ctx.dir("plots").join(name));
            Ok(())
        };
        if !curves.is_empty() {
            let mut data = String::from("model,epoch,val_adp\n");
            for (n, c) in &curves {
                for (e, v) in c.iter().enumerate() {
                    writeln!(data, "{n},{e},{}", sig6(*v)).unwrap();
                }
            }
            put(
                "adp_curves.svg",
                svg::line_chart("Validation ADP per epoch", &curves, "epoch", "ADP", &data),
            )?;
        }
        put(
            "correlation.svg",
            svg::scatter_chart(
                &format!("Aggregated min temperature vs density (r = {})", sig6(r)),
                &points,
                "min temperature (C)",
                "density (g/cm3)",
                &corr_data,
            ),
        )?;
        put(
            "target_distribution.svg",
            svg::line_chart("Sorted targets, min-max scaled", &dist, "part rank", "scaled value", &dist_data),
        )?;
        Ok(files)
    })
}

/// Every stage in order.
pub fn cmd_all(ctx: &Context) -> Result<()> {
    cmd_synth(ctx)?;
    cmd_preprocess(ctx)?;
    cmd_pretrain(ctx)?;
    cmd_train(ctx)?;
    cmd_eval(ctx)?;
    cmd_plot(ctx)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn telemetry_csv_round_trips_values() {
        let s = crate::synthbed::SynthConfig::default();
        let (layout, job) = s.job(3, 1);
        let recs: Vec<TelemetryRecord> = layout
            .parts
            .iter()
            .map(|p| crate::synthbed::telemetry_record(&layout, &job, p))
            .collect();
        let back = parse_telemetry(&telemetry_csv(&recs), Path::new("t")).unwrap();
        for (a, b) in recs.iter().zip(&back) {
            assert_eq!(
                crate::preprocess::encode_record(a).unwrap(),
                crate::preprocess::encode_record(b).unwrap()
            );
        }
    }

    #[test]
    fn mean_image_baseline_is_mean_deviation() {
        let a = vec![1.0, 3.0];
        let b = vec![3.0, 5.0];
        let train: Vec<&[f64]> = vec![&a, &b];
        assert_eq!(mean_image_adp(&train, &train).unwrap(), 1.0);
    }

    #[test]
    fn failed_stage_leaves_no_partial_output() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("stage");
        let r: Result<()> = staged(&target, |d| {
            fs::write(d.join("x"), b"1").unwrap();
            Err(Error::InvalidArgument("boom".into()))
        });
        assert!(r.is_err());
        assert!(!target.exists());
        assert!(!dir.path().join("stage.partial").exists());
    }
}
