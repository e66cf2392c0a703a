//! Subcommand implementations. Each returns the process exit code on
//! success; errors bubble to main for classification.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;

use ticnn::analysis::{
    extract_descriptors, invariance_scores, retrieval_ranks, TransformSweep,
};
use ticnn::data::{
    distort as distort_set, load_idx, load_idx_images, save_idx, write_atomic, write_meta,
    DistortKind, DistortionSpec, LabeledImageSet,
};
use ticnn::training::{
    evaluate, grad_check_spec, load_checkpoint, load_config, save_checkpoint, train as train_net,
    LogRow, Network, TrainHooks,
};
use ticnn::{Error, Real, Result};

const SPLITS: [(&str, &str, &str); 2] = [
    ("train", "train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    ("t10k", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
];

fn load_split(dir: &Path, split: &str) -> Result<LabeledImageSet> {
    let (_, images, labels) = SPLITS
        .iter()
        .find(|(name, _, _)| *name == split)
        .expect("split is train or t10k");
    let images = dir.join(images);
    let labels = dir.join(labels);
    if !images.exists() {
        return Err(Error::Format(format!("missing data file {}", images.display())));
    }
    if !labels.exists() {
        return Err(Error::Format(format!("missing data file {}", labels.display())));
    }
    load_idx(&images, &labels)
}

/// t10k when present, otherwise train.
fn load_eval_split(dir: &Path) -> Result<LabeledImageSet> {
    if dir.join(SPLITS[1].1).exists() {
        load_split(dir, "t10k")
    } else {
        load_split(dir, "train")
    }
}

#[derive(Args)]
pub struct DistortArgs {
    /// Distortion protocol: R, S, T, RTS, or none.
    #[arg(long)]
    kind: String,
    /// Directory holding MNIST-style IDX pairs (train and/or t10k).
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory (created if needed).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Canvas side for T/RTS placement (and centered padding for none).
    #[arg(long)]
    canvas: Option<usize>,
    #[arg(long)]
    angle_min: Option<Real>,
    #[arg(long)]
    angle_max: Option<Real>,
    #[arg(long)]
    scale_min: Option<Real>,
    #[arg(long)]
    scale_max: Option<Real>,
}

pub fn distort(args: DistortArgs) -> Result<u8> {
    let kind = DistortKind::parse(&args.kind)?;
    let mut spec = DistortionSpec::new(kind, args.seed);
    if let Some(v) = args.canvas {
        spec.canvas = v;
    }
    if let Some(v) = args.angle_min {
        spec.angle_min = v;
    }
    if let Some(v) = args.angle_max {
        spec.angle_max = v;
    }
    if let Some(v) = args.scale_min {
        spec.scale_min = v;
    }
    if let Some(v) = args.scale_max {
        spec.scale_max = v;
    }

    std::fs::create_dir_all(&args.out)?;
    let mut processed = 0;
    for (i, (split, images, labels)) in SPLITS.iter().enumerate() {
        if !args.input.join(images).exists() {
            continue;
        }
        let set = load_split(&args.input, split)?;
        // one fixed sub-stream per split
        let mut split_spec = spec;
        split_spec.seed = spec.seed.wrapping_add(i as u64);
        let out_set = distort_set(&set, &split_spec)?;
        save_idx(&out_set, &args.out.join(images), &args.out.join(labels))?;
        processed += 1;
    }
    if processed == 0 {
        return Err(Error::Format(format!(
            "no IDX pairs found under {}",
            args.input.display()
        )));
    }
    write_meta(&args.out.join("meta.txt"), &spec)?;
    println!(
        "distorted {processed} split(s) with kind {} into {}",
        kind.tag(),
        args.out.display()
    );
    Ok(0)
}

#[derive(Args)]
pub struct TrainArgs {
    /// TOML experiment config ([network] + [train]).
    #[arg(long)]
    config: PathBuf,
    /// Directory with train (and optionally t10k) IDX pairs.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoint, log, and report.
    #[arg(long)]
    out: PathBuf,
}

pub fn train(args: TrainArgs) -> Result<u8> {
    let cfg = load_config(&args.config)?;
    let train_set = load_split(&args.data, "train")?;
    let eval_set = if args.data.join(SPLITS[1].1).exists() {
        Some(load_split(&args.data, "t10k")?)
    } else {
        None
    };
    std::fs::create_dir_all(&args.out)?;

    let mut net = Network::build(&cfg.network)?;
    let mut csv = String::from("iter,lr,loss,eval_error\n");
    let mut on_log = |row: &LogRow| {
        let eval = row.eval_error.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{},{}", row.iter, row.lr, row.loss, eval);
        if (row.iter + 1) % 1000 == 0 {
            eprintln!("iter {:6}  lr {:.6}  loss {:.5}", row.iter + 1, row.lr, row.loss);
        }
    };
    let out_dir = args.out.clone();
    let mut on_checkpoint = move |iter: usize, net: &Network| {
        save_checkpoint(net, &out_dir.join(format!("checkpoint_{iter}.ticn")))
    };
    let mut hooks = TrainHooks {
        on_log: Some(&mut on_log),
        on_checkpoint: Some(&mut on_checkpoint),
    };
    let report = train_net(&mut net, &train_set, eval_set.as_ref(), &cfg.train, &mut hooks)?;

    save_checkpoint(&net, &args.out.join("checkpoint.ticn"))?;
    write_atomic(&args.out.join("train_log.csv"), csv.as_bytes())?;

    let final_eval = match &eval_set {
        Some(set) => Some(evaluate(&mut net, set, 1)?),
        None => None,
    };
    let json = serde_json::json!({
        "iterations": report.iterations,
        "final_loss": report.final_loss,
        "final_eval": final_eval,
    });
    write_atomic(
        &args.out.join("report.json"),
        serde_json::to_string_pretty(&json).expect("report serializes").as_bytes(),
    )?;
    if let Some(eval) = &final_eval {
        println!("final loss {:.5}, test error {:.4}", report.final_loss, eval.error_rate);
    } else {
        println!("final loss {:.5}", report.final_loss);
    }
    Ok(0)
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory with IDX pairs; t10k is preferred over train.
    #[arg(long)]
    data: PathBuf,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn eval(args: EvalArgs) -> Result<u8> {
    let mut net = load_checkpoint(&args.checkpoint)?;
    let set = load_eval_split(&args.data)?;
    let report = evaluate(&mut net, &set, 1)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{json}");
    if let Some(out) = args.out {
        write_atomic(&out, json.as_bytes())?;
    }
    Ok(0)
}

#[derive(Args)]
pub struct GradCheckArgs {
    /// TOML config whose [network] section defines the net to check.
    #[arg(long)]
    spec: PathBuf,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    eps: Real,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-5)]
    tol: Real,
}

pub fn grad_check(args: GradCheckArgs) -> Result<u8> {
    let cfg = load_config(&args.spec)?;
    let report = grad_check_spec(&cfg.network, args.eps)?;
    println!(
        "checked {} parameters: max relative error {:.3e} at {}[{}]",
        report.params_checked, report.max_rel_error, report.worst_param, report.worst_index
    );
    if report.max_rel_error <= args.tol {
        println!("gradient check passed (tolerance {:.1e})", args.tol);
        Ok(0)
    } else {
        Err(Error::Numeric(format!(
            "gradient check failed: {:.3e} > {:.1e}",
            report.max_rel_error, args.tol
        )))
    }
}

#[derive(Args)]
pub struct InvarianceArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory with IDX pairs for the base measurement set.
    #[arg(long)]
    data: PathBuf,
    /// Fraction of top-scoring neurons entering the layer means.
    #[arg(long, default_value_t = 0.2)]
    p: Real,
    /// Sweep grid: "default" (rotation/scale/translation) or "identity".
    #[arg(long, default_value = "default")]
    grid: String,
    /// Base inputs to measure over.
    #[arg(long, default_value_t = 1000)]
    base_count: usize,
    /// Output directory for invariance.json and invariance_layers.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

pub fn invariance(args: InvarianceArgs) -> Result<u8> {
    let mut net = load_checkpoint(&args.checkpoint)?;
    let base = load_eval_split(&args.data)?.take(args.base_count)?;
    let sweep = match args.grid.as_str() {
        "default" => TransformSweep::paper_default(),
        "identity" => TransformSweep::identity_only(),
        other => {
            return Err(Error::Input(format!(
                "unknown grid {other:?}, expected default|identity"
            )))
        }
    };
    let report = invariance_scores(&mut net, &base, &sweep, args.p)?;

    std::fs::create_dir_all(&args.out)?;
    write_atomic(
        &args.out.join("invariance.json"),
        serde_json::to_string_pretty(&report).expect("report serializes").as_bytes(),
    )?;
    let mut csv = String::from("layer,neurons,top_count,mean_top_score\n");
    for layer in &report.layers {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            layer.layer, layer.neurons, layer.top_count, layer.mean_top_score
        );
    }
    write_atomic(&args.out.join("invariance_layers.csv"), csv.as_bytes())?;
    for layer in &report.layers {
        println!(
            "layer {:2}: {:3} neurons, mean top-{:.0}% score {:.3}",
            layer.layer,
            layer.neurons,
            report.p * 100.0,
            layer.mean_top_score
        );
    }
    Ok(0)
}

#[derive(Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory holding images-idx3-ubyte with the corpus images.
    #[arg(long)]
    corpus: PathBuf,
    /// Text file with one group id per corpus image.
    #[arg(long)]
    groups: PathBuf,
    /// Output directory for retrieval.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

pub fn retrieve(args: RetrieveArgs) -> Result<u8> {
    let mut net = load_checkpoint(&args.checkpoint)?;
    let images_path = args.corpus.join("images-idx3-ubyte");
    if !images_path.exists() {
        return Err(Error::Format(format!("missing corpus file {}", images_path.display())));
    }
    let images = load_idx_images(&images_path)?;
    let text = std::fs::read_to_string(&args.groups)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", args.groups.display())))?;
    let groups: Vec<usize> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim().parse::<usize>().map_err(|_| {
                Error::Format(format!("group file line {l:?} is not an integer"))
            })
        })
        .collect::<Result<_>>()?;

    let descriptors = extract_descriptors(&mut net, &images)?;
    let report = retrieval_ranks(&descriptors, &groups)?;

    std::fs::create_dir_all(&args.out)?;
    let mut csv = String::from("query,top1,top2,top3,top4,same_group\n");
    for q in &report.per_query {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            q.query, q.top[0], q.top[1], q.top[2], q.top[3], q.same_group
        );
    }
    write_atomic(&args.out.join("retrieval.csv"), csv.as_bytes())?;
    println!("ns_score {:.3} over {} queries", report.ns_score, report.per_query.len());
    Ok(0)
}
