use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use svshape::characterize::{characterize_model, pair_key, preset_order, CharacteristicTable};
use svshape::checkpoint::{load_model_weights, ModelWeights, NameSchema};
use svshape::dsv::{
    all_pairs_dsv, classify_outcome, fit_normal, fit_pareto, histogram, pairwise_dsv, polar_histogram, Class,
    DistributionClass, DsvSamples, NormalFit, PairOutcome, ParetoFit,
};
use svshape::generator::{generate_pair_and_validate, matrix_csv, CountLaw, GeneratorConfig};
use svshape::lora::{load_adapter, reshape_lora_init, validate_bundle, LoraTargetSpec, Mode, ValidationReport};
use svshape::spectral::{build_all_msvs_with, Msv, SpectralOptions};
use svshape::tensors::StoreDtype;
use svshape::ProjectionKind;

use crate::run::{input_digest, InputDigest, Outputs};
use crate::{AnalyzeArgs, CharacterizeArgs, GenerateArgs, LawArg, ModeArg, ModelArgs, ReshapeArgs, TargetPreset, ValidateArgs};

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn resolve_model(args: &ModelArgs) -> Result<PathBuf> {
    if args.model.exists() {
        return Ok(args.model.clone());
    }
    if let Some(cache) = &args.cache {
        let cached = cache.join(&args.model);
        if cached.exists() {
            return Ok(cached);
        }
    }
    bail!("model {} not found (also checked the cache directory)", args.model.display())
}

struct Loaded {
    model: ModelWeights,
    msvs: Vec<Msv>,
    inputs: Vec<InputDigest>,
}

fn load(args: &ModelArgs) -> Result<Loaded> {
    let path = resolve_model(args)?;
    let mut inputs = vec![input_digest(&path)?];
    let schema = match &args.names {
        Some(p) => {
            inputs.push(input_digest(p)?);
            NameSchema::from_json(&read(p)?)?
        }
        None => NameSchema::default(),
    };
    let model = load_model_weights(&path, &schema)?;
    let opts = SpectralOptions {
        clamp_rank: args.clamp_rank,
        ..Default::default()
    };
    let msvs = build_all_msvs_with(&model, args.rank, &opts)?;
    Ok(Loaded { model, msvs, inputs })
}

#[derive(Serialize)]
struct PoolSummary {
    sample_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pareto: Option<ParetoFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    normal: Option<NormalFit>,
    class: Option<DistributionClass>,
    #[serde(skip_serializing_if = "Option::is_none")]
    unclassifiable: Option<String>,
}

impl PoolSummary {
    fn new(pool: &DsvSamples, with_fits: bool) -> Result<Self> {
        let outcome = classify_outcome(pool)?;
        let (class, unclassifiable) = match outcome {
            PairOutcome::Classified(c) => (Some(c), None),
            PairOutcome::Unclassifiable(reason) => (None, Some(reason)),
        };
        Ok(Self {
            sample_count: pool.len(),
            pareto: if with_fits { fit_pareto(pool).ok() } else { None },
            normal: if with_fits { fit_normal(pool).ok() } else { None },
            class,
            unclassifiable,
        })
    }
}

#[derive(Serialize)]
struct AnalysisSummary {
    model_id: String,
    num_layers: usize,
    rank: usize,
    shapes: BTreeMap<ProjectionKind, (usize, usize)>,
    /// Generalized-Pareto shape of the all-pairs pool.
    alpha: Option<f64>,
    all_pairs: PoolSummary,
    pairs: BTreeMap<String, PoolSummary>,
}

fn values_csv(pool: &DsvSamples) -> String {
    let mut out = String::from("distance\n");
    for v in &pool.values {
        out.push_str(&format!("{v:e}\n"));
    }
    out
}

pub fn analyze(args: &AnalyzeArgs, out: &Path, seed: u64) -> Result<bool> {
    let Loaded { model, msvs, inputs } = load(&args.model)?;
    let mut outputs = Outputs::create(out, "analyze", inputs, args, seed)?;
    for msv in &msvs {
        outputs.csv(&format!("msv_{}.csv", msv.kind), &msv.to_csv())?;
    }

    let all = all_pairs_dsv(&msvs)?.without_zeros();
    outputs.csv("dsv_all_pairs.csv", &values_csv(&all))?;
    match histogram(&all, args.bins) {
        Ok(h) => outputs.csv("histogram_all_pairs.csv", &h.to_csv())?,
        Err(e) => log::warn!("no histogram: {e}"),
    }
    match polar_histogram(&all, args.sectors) {
        Ok(p) => outputs.csv("polar_all_pairs.csv", &p.to_csv())?,
        Err(e) => log::warn!("no polar histogram: {e}"),
    }
    let all_pairs = PoolSummary::new(&all, true)?;

    let mut pairs = BTreeMap::new();
    let mut long = String::from("pool,distance\n");
    for (i, a) in msvs.iter().enumerate() {
        for b in &msvs[i..] {
            let pool = pairwise_dsv(a, b)?.without_zeros();
            let key = pair_key(a.kind, b.kind);
            for v in &pool.values {
                long.push_str(&format!("{key},{v:e}\n"));
            }
            pairs.insert(key, PoolSummary::new(&pool, false)?);
        }
    }
    outputs.csv("dsv_pairs.csv", &long)?;

    let summary = AnalysisSummary {
        model_id: model.model_id.clone(),
        num_layers: model.num_layers,
        rank: msvs[0].rank,
        shapes: model.shapes().clone(),
        alpha: all_pairs.pareto.map(|p| p.shape_alpha),
        all_pairs,
        pairs,
    };
    outputs.json("summary.json", &summary)?;
    match summary.alpha {
        Some(a) => println!("{}: rank {}, all-pairs alpha {a:.4}", summary.model_id, summary.rank),
        None => println!("{}: rank {}, all-pairs pool could not be fitted", summary.model_id, summary.rank),
    }
    outputs.finish("ok")?;
    Ok(true)
}

pub fn characterize(args: &CharacterizeArgs, out: &Path, seed: u64) -> Result<bool> {
    let order = preset_order(&args.preset).with_context(|| format!("unknown preset {}", args.preset))?;
    let Loaded { model, msvs, inputs } = load(&args.model)?;
    let mut outputs = Outputs::create(out, "characterize", inputs, args, seed)?;
    let table = characterize_model(&model.model_id, &msvs, &order)?;
    outputs.json("characteristic_table.json", &table)?;
    println!("{}", table.summary());
    outputs.finish("ok")?;
    Ok(true)
}

#[derive(Serialize)]
struct GenerateReport {
    config: GeneratorConfig,
    expected_class: Class,
    class: Option<DistributionClass>,
    degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    unclassifiable: Option<String>,
    pool_size: usize,
    as_expected: bool,
}

fn law_config(args: &GenerateArgs) -> GeneratorConfig {
    let law = match args.law {
        LawArg::Pareto => CountLaw::pareto_default(args.n),
        LawArg::Gaussian => CountLaw::gaussian_default(args.n),
        LawArg::Constant => CountLaw::constant_default(args.n),
    };
    GeneratorConfig::new(args.n, args.m, law, 0)
}

pub fn generate(args: &GenerateArgs, out: &Path, seed: u64) -> Result<bool> {
    let mut inputs = Vec::new();
    let mut cfg = match &args.config {
        Some(p) => {
            inputs.push(input_digest(p)?);
            GeneratorConfig::from_json(&read(p)?)?
        }
        None => law_config(args),
    };
    cfg.seed = seed;
    cfg.validate()?;
    let mut outputs = Outputs::create(out, "generate", inputs, &cfg, seed)?;
    let pair = generate_pair_and_validate(&cfg)?;
    let template = nalgebra::DMatrix::from_row_slice(1, cfg.n, &pair.template);
    outputs.tensors(
        "generated.safetensors",
        [("a", &pair.a), ("b", &pair.b), ("template", &template)],
        StoreDtype::F64,
    )?;
    outputs.csv("a.csv", &matrix_csv(&pair.a))?;
    outputs.csv("b.csv", &matrix_csv(&pair.b))?;
    outputs.csv("dsv_pool.csv", &values_csv(&pair.pool))?;

    let degenerate = pair.pool.values.iter().all(|v| *v == pair.pool.values[0]);
    let as_expected = pair.matches_expectation(&cfg.count_law);
    let (class, unclassifiable) = match &pair.outcome {
        PairOutcome::Classified(c) => (Some(*c), None),
        PairOutcome::Unclassifiable(reason) => (None, Some(reason.clone())),
    };
    let report = GenerateReport {
        expected_class: cfg.count_law.expected_class(),
        class,
        degenerate,
        unclassifiable,
        pool_size: pair.pool.len(),
        as_expected,
        config: cfg,
    };
    outputs.json("report.json", &report)?;

    let ok = as_expected && !degenerate;
    match (&report.class, degenerate) {
        (_, true) => eprintln!("distance pool is degenerate (all {} distances equal)", report.pool_size),
        (Some(c), _) => println!("class {:?} (expected {:?}), score {:.4}", c.class, report.expected_class, c.score),
        (None, _) => println!("pool unclassifiable: {}", report.unclassifiable.as_deref().unwrap_or("")),
    }
    if !as_expected {
        eprintln!("classification does not match the count law's expected class");
    }
    outputs.finish(if ok { "ok" } else { "validation-failed" })?;
    Ok(ok)
}

fn print_report(report: &ValidationReport) {
    let bad_shapes = report.shape_audit.iter().filter(|a| !a.ok).count();
    println!(
        "shapes {} ({} tensors, {bad_shapes} bad), digest {}",
        if report.shapes_ok { "ok" } else { "FAILED" },
        report.shape_audit.len(),
        if report.digest_matches_manifest { "matches" } else { "MISMATCH" }
    );
    if let Some(z) = report.zero_b_ok {
        println!("zero-b {}", if z { "ok" } else { "FAILED" });
    }
    for g in &report.groups {
        let class = g
            .class
            .map(|c| format!("{:?}", c.class))
            .unwrap_or_else(|| "unclassifiable".into());
        println!(
            "group {}: {} distances, {class}{}",
            g.reference,
            g.sample_count,
            if g.as_expected { "" } else { " (unexpected)" }
        );
    }
}

pub fn reshape(args: &ReshapeArgs, out: &Path, seed: u64) -> Result<bool> {
    let mut inputs = vec![input_digest(&args.table)?];
    let table = CharacteristicTable::from_json(&read(&args.table)?)?;
    let mut target = match (&args.target, args.target_preset) {
        (Some(p), _) => {
            inputs.push(input_digest(p)?);
            LoraTargetSpec::from_json(&read(p)?)?
        }
        (None, Some(TargetPreset::Llama32_1b)) => LoraTargetSpec::llama_3_2_1b(16),
        (None, None) => bail!("--target or --target-preset is required"),
    };
    if let Some(rank) = args.rank {
        target.rank = rank;
    }
    if let Some(mode) = args.mode {
        target.mode = match mode {
            ModeArg::Paper => Mode::PaperFaithful,
            ModeArg::ZeroB => Mode::ZeroB,
        };
    }
    target.validate()?;
    let gen = match &args.generator {
        Some(p) => {
            inputs.push(input_digest(p)?);
            GeneratorConfig::from_json(&read(p)?)?
        }
        None => GeneratorConfig::new(64, 64, CountLaw::pareto_default(64), seed),
    };

    #[derive(Serialize)]
    struct Effective<'a> {
        target: &'a LoraTargetSpec,
        generator: &'a GeneratorConfig,
    }
    let mut outputs = Outputs::create(out, "reshape", inputs, &Effective { target: &target, generator: &gen }, seed)?;
    let bundle = reshape_lora_init(&target, &table, &gen, seed)?;
    outputs.adapter("adapter_model.safetensors", &bundle)?;
    let report = validate_bundle(&bundle, &table)?;
    outputs.json("validation_report.json", &report)?;
    print_report(&report);
    outputs.finish(if report.all_ok { "ok" } else { "validation-failed" })?;
    Ok(report.all_ok)
}

pub fn validate(args: &ValidateArgs, out: &Path, seed: u64) -> Result<bool> {
    let inputs = vec![input_digest(&args.adapter)?, input_digest(&args.table)?];
    let table = CharacteristicTable::from_json(&read(&args.table)?)?;
    let bundle = load_adapter(&args.adapter)?;
    let mut outputs = Outputs::create(out, "validate", inputs, args, seed)?;
    let report = validate_bundle(&bundle, &table)?;
    outputs.json("validation_report.json", &report)?;
    print_report(&report);
    outputs.finish(if report.all_ok { "ok" } else { "validation-failed" })?;
    Ok(report.all_ok)
}
