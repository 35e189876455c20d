use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde_json::json;

use point_set_diffusion::datagen::{
    HawkesParams, PinwheelParams, ProcessSpec, RateField, SyntheticSpec,
};
use point_set_diffusion::io::parse_mask;
use point_set_diffusion::{
    evaluate as evaluate_metric, make_schedule, sample_batch, split_by_mask, train as train_model,
    AxisBox, Dataset, Denoiser, DenoiserConfig, Domain, GroundCost, Mask, Metric, MetricReport,
    ModelFile, NeuralDenoiser, PointSet, SampleTask, SeedStream, TrainConfig,
};

use crate::error::{Class, CliError, CliResult};
use crate::manifest::{RunManifest, ScheduleSummary};
use crate::{BenchmarkArgs, DatagenArgs, EvaluateArgs, ForecastArgs, SampleArgs, TrainArgs};

// Cap on panels drawn into one SVG.
const SVG_PANELS: usize = 16;

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn elapsed(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

fn default_domain(kind: &str) -> (Vec<f64>, Vec<f64>, Option<usize>) {
    match kind {
        "hawkes_st" | "pinwheel_hawkes" => (vec![0.0, 0.0, 0.0], vec![10.0, 1.0, 1.0], Some(0)),
        _ => (vec![0.0, 0.0], vec![1.0, 1.0], None),
    }
}

fn spec_from_flags(a: &DatagenArgs, kind: &str) -> CliResult<SyntheticSpec> {
    let (lo, hi, ord) = default_domain(kind);
    let lower = a.lower.clone().unwrap_or(lo);
    let upper = a.upper.clone().unwrap_or(hi);
    let ordered_axis = a.ordered_axis.or(ord);
    let domain = Domain::new(lower.len(), lower, upper, ordered_axis)?;
    let hawkes = HawkesParams {
        mu: a.mu,
        alpha: a.alpha,
        beta: a.beta,
        spatial_width: a.spatial_width,
    };
    let process = match kind {
        "homogeneous_poisson" => ProcessSpec::HomogeneousPoisson { rate: a.rate },
        "inhomogeneous_poisson" => ProcessSpec::InhomogeneousPoisson {
            field: RateField::three_clusters(&domain, a.expected)?,
        },
        "hawkes_st" => ProcessSpec::HawkesSt { hawkes },
        "pinwheel_hawkes" => ProcessSpec::PinwheelHawkes {
            hawkes,
            pinwheel: PinwheelParams {
                arms: a.arms,
                ..PinwheelParams::default()
            },
        },
        other => return Err(CliError::usage(format!("unknown process kind {other:?}"))),
    };
    Ok(SyntheticSpec {
        process,
        domain,
        num_instances: a.num,
        seed: a.seed,
    })
}

pub fn datagen(a: &DatagenArgs) -> CliResult<()> {
    let spec = match (&a.spec, &a.kind) {
        (Some(path), _) => serde_json::from_str::<SyntheticSpec>(&read_text(path)?)
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?,
        (None, Some(kind)) => spec_from_flags(a, kind)?,
        (None, None) => return Err(CliError::usage("need --kind or --spec")),
    };
    let start = Instant::now();
    let sets = spec.generate()?;
    let data = Dataset::new(Arc::new(spec.domain.clone()), sets)?;
    data.save(&a.out)?;

    let config = serde_json::to_value(&spec).expect("spec serializes");
    let mut m = RunManifest::new("datagen", config, Some(spec.seed));
    m.output(&a.out);
    m.timings.insert("generate".into(), elapsed(start));
    m.write_beside(&a.out)?;
    Ok(())
}

fn resolve_train_config(a: &TrainArgs) -> CliResult<TrainConfig> {
    let mut cfg = match &a.config {
        Some(path) => TrainConfig::from_kv_str(&read_text(path)?)
            .map_err(|e| CliError::new(Class::Usage, format!("{}: {e}", path.display())))?,
        None => TrainConfig::default(),
    };
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim(), 0)
            .map_err(|e| CliError::usage(format!("--set {kv}: {e}")))?;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(n) = a.epochs_max {
        cfg.epochs_max = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn config_json(cfg: &TrainConfig) -> serde_json::Value {
    let map: serde_json::Map<String, serde_json::Value> = cfg
        .to_kv_string()
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), json!(v)))
        .collect();
    serde_json::Value::Object(map)
}

pub fn train(a: &TrainArgs, workers: usize) -> CliResult<()> {
    let cfg = resolve_train_config(a)?;
    let train_raw = Dataset::load(&a.data)?;
    let val_raw = Dataset::load(&a.val)?;
    if *train_raw.domain != *val_raw.domain {
        return Err(CliError::new(
            Class::Domain,
            "training and validation files declare different domains",
        ));
    }
    let train_set = train_raw.normalized()?;
    let val_set = val_raw.normalized()?;
    let dim = train_set.domain.dim();
    let schedule = make_schedule(
        cfg.steps,
        cfg.schedule,
        train_set.mean_cardinality(),
        train_set.domain.volume(),
    )?;
    let max_count = match cfg.max_count {
        0 => DenoiserConfig::max_count_for(
            train_set.max_cardinality().max(val_set.max_cardinality()),
        ),
        n => n,
    };
    let dcfg = DenoiserConfig {
        width: cfg.width,
        heads: cfg.heads,
        depth: cfg.depth,
        components: cfg.components,
        max_count,
        ..DenoiserConfig::default()
    };
    let mut init_rng = SeedStream::new(cfg.seed).child(2).rng();
    let model = NeuralDenoiser::new(
        dcfg,
        dim,
        train_set.domain.ordered_axis(),
        cfg.steps,
        &mut init_rng,
    )?;

    let start = Instant::now();
    let verbose = a.verbose;
    let mut observer = |r: &point_set_diffusion::training::EpochRecord| {
        if verbose {
            let val = r.val_metric.map_or(String::new(), |v| format!(" val={v}"));
            eprintln!("epoch {} bce={} nll={}{val}", r.epoch, r.bce, r.nll);
        }
    };
    let outcome = train_model(
        &train_set.sets,
        &val_set.sets,
        &cfg,
        &schedule,
        model,
        &mut observer,
    )?;
    let train_secs = elapsed(start);

    ModelFile::new(&outcome.best, &train_raw.domain, &schedule)?.save(&a.out)?;
    let history = a
        .history
        .clone()
        .unwrap_or_else(|| with_suffix(&a.out, ".history.csv"));
    write_text(&history, &outcome.history.to_csv())?;

    let config = json!({
        "data": a.data.display().to_string(),
        "val": a.val.display().to_string(),
        "train": config_json(&cfg),
        "workers": workers,
        "best_epoch": outcome.history.best_epoch,
        "stopped_early": outcome.history.stopped_early,
    });
    let mut m = RunManifest::new("train", config, Some(cfg.seed));
    m.schedule = Some(ScheduleSummary::of(&schedule));
    m.hash_model(&a.out)?;
    m.output(&a.out);
    m.output(&history);
    m.timings.insert("train".into(), train_secs);
    m.write_beside(&a.out)?;
    Ok(())
}

/// A loaded model file with its raw domain shared for denormalization.
struct Loaded {
    file: ModelFile,
    model: NeuralDenoiser,
    raw: Arc<Domain>,
}

fn load_model(path: &Path) -> CliResult<Loaded> {
    let file = ModelFile::load(path)?;
    let model = file.model()?;
    let raw = Arc::new(file.domain.clone());
    Ok(Loaded { file, model, raw })
}

fn load_known(path: &Path, raw: &Domain) -> CliResult<Vec<PointSet>> {
    let known = Dataset::load(path)?;
    if *known.domain != *raw {
        return Err(CliError::new(
            Class::Domain,
            format!(
                "{} declares a different domain than the model",
                path.display()
            ),
        ));
    }
    if known.sets.is_empty() {
        return Err(CliError::usage(format!(
            "{} holds no records",
            path.display()
        )));
    }
    Ok(known.normalized()?.sets)
}

struct Conditioning {
    boxes: Vec<AxisBox>,
    mask: Mask,
    known: Vec<PointSet>,
    /// Keep only the known points inside the mask instead of rejecting others.
    clip: bool,
}

/// Generate `num` sets (raw coordinates) and write samples, SVG and manifest.
#[allow(clippy::too_many_arguments)]
fn run_sampling(
    command: &str,
    lm: &Loaded,
    model_path: &Path,
    cond: Option<Conditioning>,
    num: usize,
    seed: u64,
    out: &Path,
    svg: Option<&Path>,
    workers: usize,
    extra: serde_json::Value,
) -> CliResult<()> {
    if num == 0 {
        return Err(CliError::usage("--num must be positive"));
    }
    let canonical = lm.model.domain().clone();
    let tasks: Vec<SampleTask> = match &cond {
        None => vec![SampleTask::Unconditional; num],
        Some(c) => {
            let mask = c.mask.normalized(&lm.raw)?;
            (0..num)
                .map(|i| {
                    let known = match c.known.get(i % c.known.len().max(1)) {
                        Some(k) if c.clip => split_by_mask(k, &mask).0,
                        Some(k) => k.clone(),
                        None => PointSet::empty(canonical.clone()),
                    };
                    SampleTask::Conditional {
                        known,
                        mask: mask.clone(),
                    }
                })
                .collect()
        }
    };
    let start = Instant::now();
    let sets = sample_batch(
        &lm.model,
        &lm.file.schedule,
        &tasks,
        SeedStream::new(seed),
        workers,
    )?;
    let sample_secs = elapsed(start);
    let raw_sets = sets
        .iter()
        .map(|s| s.denormalized(&lm.raw))
        .collect::<point_set_diffusion::Result<Vec<_>>>()?;
    Dataset::new(lm.raw.clone(), raw_sets.clone())?.save(out)?;

    let mut m = RunManifest::new(command, extra, Some(seed));
    m.schedule = Some(ScheduleSummary::of(&lm.file.schedule));
    m.hash_model(model_path)?;
    m.output(out);
    if let Some(svg_path) = svg {
        let shown = &raw_sets[..raw_sets.len().min(SVG_PANELS)];
        let (boxes, known) = match &cond {
            Some(c) => (
                c.boxes.clone(),
                c.known
                    .first()
                    .map(|k| k.denormalized(&lm.raw))
                    .transpose()?,
            ),
            None => (Vec::new(), None),
        };
        write_text(
            svg_path,
            &crate::svg::render(&lm.raw, shown, &boxes, known.as_ref()),
        )?;
        m.output(svg_path);
    }
    m.timings.insert("sample".into(), sample_secs);
    m.write_beside(out)?;
    Ok(())
}

pub fn sample(a: &SampleArgs, workers: usize) -> CliResult<()> {
    let lm = load_model(&a.model)?;
    let cond = match &a.mask {
        None => None,
        Some(path) => {
            let mask = parse_mask(&read_text(path)?, lm.raw.dim())
                .map_err(|e| CliError::new(Class::Mask, format!("{}: {e}", path.display())))?;
            let boxes = match &mask {
                Mask::Boxes { boxes, .. } => boxes.clone(),
                Mask::Predicate(_) => Vec::new(),
            };
            let known = match &a.known {
                Some(k) => load_known(k, &lm.raw)?,
                None => Vec::new(),
            };
            Some(Conditioning {
                boxes,
                mask,
                known,
                clip: a.clip_known,
            })
        }
    };
    let extra = json!({
        "model": a.model.display().to_string(),
        "num": a.num,
        "mask": a.mask.as_ref().map(|p| p.display().to_string()),
        "known": a.known.as_ref().map(|p| p.display().to_string()),
        "workers": workers,
    });
    run_sampling(
        "sample",
        &lm,
        &a.model,
        cond,
        a.num,
        a.seed,
        &a.out,
        a.svg.as_deref(),
        workers,
        extra,
    )
}

pub fn forecast(a: &ForecastArgs, workers: usize) -> CliResult<()> {
    let lm = load_model(&a.model)?;
    let axis = lm.raw.ordered_axis().ok_or_else(|| {
        CliError::new(
            Class::Domain,
            "forecasting needs a domain with an ordered axis",
        )
    })?;
    let (lo, hi) = (lm.raw.lower()[axis], lm.raw.upper()[axis]);
    if !(lo..=hi).contains(&a.split) {
        return Err(CliError::usage(format!(
            "--split {} outside [{lo}, {hi}]",
            a.split
        )));
    }
    let mut upper = lm.raw.upper().to_vec();
    upper[axis] = a.split;
    let boxes = vec![AxisBox::new(lm.raw.lower().to_vec(), upper)?];
    let cond = Conditioning {
        mask: Mask::from_boxes(boxes.clone()),
        boxes,
        known: load_known(&a.known, &lm.raw)?,
        clip: true,
    };
    let extra = json!({
        "model": a.model.display().to_string(),
        "known": a.known.display().to_string(),
        "split": a.split,
        "num": a.num,
        "workers": workers,
    });
    run_sampling(
        "forecast",
        &lm,
        &a.model,
        Some(cond),
        a.num,
        a.seed,
        &a.out,
        a.svg.as_deref(),
        workers,
        extra,
    )
}

pub fn evaluate(a: &EvaluateArgs, workers: usize) -> CliResult<()> {
    let metrics = a
        .metrics
        .iter()
        .map(|s| s.trim().parse::<Metric>())
        .collect::<point_set_diffusion::Result<Vec<_>>>()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let ground: GroundCost = a
        .ground
        .parse()
        .map_err(|e: point_set_diffusion::Error| CliError::usage(e.to_string()))?;
    let data = Dataset::load(&a.data)?;
    if data.domain.ordered_axis().is_none() {
        if let Some(m) = metrics.iter().find(|m| m.needs_order()) {
            return Err(CliError::new(
                Class::Domain,
                format!("metric {m} needs a domain with an ordered axis"),
            ));
        }
    }

    let mut config = json!({
        "data": a.data.display().to_string(),
        "metrics": metrics.iter().map(|m| m.name()).collect::<Vec<_>>(),
        "ground": a.ground,
        "workers": workers,
    });
    let mut model_path = None;
    let mut timings = Vec::new();
    let (generated, seed) = match (&a.model, &a.samples) {
        (Some(path), _) => {
            let lm = load_model(path)?;
            if *lm.raw != *data.domain {
                return Err(CliError::new(
                    Class::Domain,
                    "model and data declare different domains",
                ));
            }
            let num = a.num.unwrap_or(data.sets.len());
            if num == 0 {
                return Err(CliError::usage("nothing to evaluate"));
            }
            let start = Instant::now();
            let tasks = vec![SampleTask::Unconditional; num];
            let sets = sample_batch(
                &lm.model,
                &lm.file.schedule,
                &tasks,
                SeedStream::new(a.seed),
                workers,
            )?;
            timings.push(("sample", elapsed(start)));
            let raw = sets
                .iter()
                .map(|s| s.denormalized(&lm.raw))
                .collect::<point_set_diffusion::Result<Vec<_>>>()?;
            config["model"] = json!(path.display().to_string());
            config["num"] = json!(num);
            model_path = Some(path.clone());
            (raw, Some(a.seed))
        }
        (None, Some(path)) => {
            let s = Dataset::load(path)?;
            if *s.domain != *data.domain {
                return Err(CliError::new(
                    Class::Domain,
                    "samples and data declare different domains",
                ));
            }
            config["samples"] = json!(path.display().to_string());
            (s.sets, None)
        }
        (None, None) => return Err(CliError::usage("need --model or --samples")),
    };

    let start = Instant::now();
    let mut csv = String::from(MetricReport::CSV_HEADER);
    csv.push('\n');
    for m in metrics {
        let mut r = evaluate_metric(m, &generated, &data.sets, ground)?;
        r.seed = seed;
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    timings.push(("metrics", elapsed(start)));
    write_text(&a.out, &csv)?;

    let mut man = RunManifest::new("evaluate", config, seed);
    if let Some(p) = model_path {
        man.hash_model(&p)?;
    }
    man.output(&a.out);
    for (k, v) in timings {
        man.timings.insert(k.into(), v);
    }
    man.write_beside(&a.out)?;
    Ok(())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn benchmark(a: &BenchmarkArgs, workers: usize) -> CliResult<()> {
    if a.sizes.is_empty() || a.sizes.contains(&0) {
        return Err(CliError::usage("--sizes must list positive sizes"));
    }
    if a.runs == 0 || a.samples == 0 {
        return Err(CliError::usage("--runs and --samples must be positive"));
    }
    let lm = load_model(&a.model)?;
    let volume = lm.model.domain().volume();
    let tasks = vec![SampleTask::Unconditional; a.samples];
    let mut csv = String::from("size,median_seconds,runs,samples\n");
    let mut m = RunManifest::new(
        "benchmark",
        json!({
            "model": a.model.display().to_string(),
            "sizes": a.sizes,
            "runs": a.runs,
            "samples": a.samples,
            "workers": workers,
        }),
        Some(a.seed),
    );
    for (k, &size) in a.sizes.iter().enumerate() {
        let schedule = lm.file.schedule.with_noise_rate(size as f64 / volume)?;
        let mut times = Vec::with_capacity(a.runs);
        for run in 0..a.runs {
            let stream = SeedStream::new(a.seed).child(k as u64).child(run as u64);
            let start = Instant::now();
            sample_batch(&lm.model, &schedule, &tasks, stream, workers)?;
            times.push(elapsed(start));
        }
        let med = median(times);
        csv.push_str(&format!("{size},{med},{},{}\n", a.runs, a.samples));
        m.timings.insert(format!("size_{size}"), med);
    }
    write_text(&a.out, &csv)?;
    m.schedule = Some(ScheduleSummary::of(&lm.file.schedule));
    m.hash_model(&a.model)?;
    m.output(&a.out);
    m.write_beside(&a.out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn suffix_appends() {
        assert_eq!(
            with_suffix(Path::new("a/m.json"), ".history.csv"),
            PathBuf::from("a/m.json.history.csv")
        );
    }
}
