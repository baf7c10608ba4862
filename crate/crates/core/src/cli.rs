//! The `aagan` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::anomaly::{attribute_vector, interpolate_latent, invert_batch, quadrant_means, residual_map, AnomalyReport};
use crate::config::RunConfig;
use crate::data::{
    gen_faces, gen_transactions, image_filename, load_image_dataset, read_transactions, save_image_dataset,
    squash_rows, unsquash_rows, write_transactions, AnomalyKind,
};
use crate::degrade::{degrade, sample_degradation, sample_degradation_integer, DegradationParams};
use crate::error::{ensure, Error, Result};
use crate::image::Image;
use crate::io::{checkpoint, create_dir_all, netpbm, read_bytes, write_atomic};
use crate::metrics::{best_f1_threshold, pr_metrics, MetricsReport};
use crate::model::{build_composite, build_tabular_gan, summarize, ModelSpec, Network};
use crate::rng::{sample_latent, LatentVector, Prng};
use crate::tensor::Tensor;
use crate::train::{batch_images, image_batch, train, Gan};

#[derive(Debug, Parser)]
#[command(name = "aagan", version, about = "GAN anomaly detection toolkit")]
pub struct Cli {
    /// Configuration file (`key = value` lines under `[section]` headers).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice; the AA_SEED environment variable wins.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelChoice {
    Discriminator,
    Generator,
    Composite,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DataKind {
    Faces,
    Transactions,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Attribute {
    Glasses,
    Smile,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print a layer table with parameter totals.
    Summary {
        #[arg(long, value_enum, default_value = "discriminator")]
        model: ModelChoice,
    },
    /// Write a synthetic dataset: a face directory or a transaction CSV.
    Datagen {
        #[arg(long, value_enum, default_value = "faces")]
        kind: DataKind,
        #[arg(long)]
        n: Option<usize>,
        /// Fraction of anomalous faces (or fraud rows for transactions).
        #[arg(long)]
        anomaly_rate: Option<f64>,
        /// Comma-separated anomaly kinds.
        #[arg(long, value_delimiter = ',')]
        kinds: Option<Vec<AnomalyKind>>,
        /// Transaction feature count.
        #[arg(long)]
        features: Option<usize>,
    },
    /// Train a GAN on the normal rows of a dataset and write a checkpoint.
    Train {
        /// Face directory or transaction CSV.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        n_sample: Option<usize>,
    },
    /// Sample the generator: an image grid, or a CSV of rows for tabular models.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 10)]
        cols: usize,
    },
    /// Apply blur, resampling, noise and JPEG quantization to an image.
    Degrade {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        /// Draw all four parameters from their ranges using the seed.
        #[arg(long, conflicts_with_all = ["sigma", "r", "delta", "q"])]
        sample_params: bool,
    },
    /// Invert one image and write its reconstruction, heatmap and loss trace.
    Invert {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Anomaly scores for every row of a dataset, as `id,label,score` CSV.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Rows inverted together.
        #[arg(long, default_value_t = 50)]
        batch: usize,
    },
    /// Detection metrics for a CSV with `label` and `score` columns.
    Eval {
        #[arg(long)]
        scores: PathBuf,
        /// Decision threshold; defaults to the F1-maximizing score.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Attribute vector between face groups and a grid walking along it.
    LatentArith {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "glasses")]
        attribute: Attribute,
        /// Faces inverted per group.
        #[arg(long, default_value_t = 16)]
        per_group: usize,
        /// Rows of the grid, one random base latent each.
        #[arg(long, default_value_t = 4)]
        bases: usize,
        /// Interpolation points from t = 0 to t = 1.
        #[arg(long, default_value_t = 8)]
        points: usize,
    },
}

/// Parses `args`, runs the command and maps the outcome to an exit status:
/// 0 on success, 2 for usage errors, 1 for operational failures.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("aagan: {}", e.to_string().replace('\n', " "));
            ExitCode::from(1)
        }
    }
}

fn effective_seed(flag: u64) -> Result<u64> {
    match std::env::var("AA_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Contract(format!("AA_SEED={v:?} is not an unsigned integer"))),
        Err(_) => Ok(flag),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = effective_seed(cli.seed)?;
    let out = cli.out;
    let out_or = |default: &str| out.clone().unwrap_or_else(|| PathBuf::from(default));
    match cli.command {
        Command::Summary { model } => summary(&cfg, model, out.as_deref()),
        Command::Datagen { kind, n, anomaly_rate, kinds, features } => {
            let mut data = cfg.data.clone();
            data.n = n.unwrap_or(data.n);
            data.kinds = kinds.unwrap_or(data.kinds);
            data.features = features.unwrap_or(data.features);
            match kind {
                DataKind::Faces => {
                    let ds = gen_faces(data.n, seed, anomaly_rate.unwrap_or(data.anomaly_rate), &data.kinds)?;
                    let dir = out_or("faces");
                    save_image_dataset(&dir, &ds)?;
                    println!("wrote {} faces ({} anomalous) to {}", ds.len(), count_ones(&ds.labels), dir.display());
                }
                DataKind::Transactions => {
                    let rate = anomaly_rate.unwrap_or(data.fraud_rate);
                    let ds = gen_transactions(data.n, data.features, seed, rate)?;
                    let path = out_or("transactions.csv");
                    write_transactions(&path, &ds.rows, &ds.labels)?;
                    println!("wrote {} rows ({} fraud) to {}", ds.labels.len(), count_ones(&ds.labels), path.display());
                }
            }
            Ok(())
        }
        Command::Train { data, steps, n_sample } => {
            let mut tc = cfg.train.clone();
            tc.steps = steps.unwrap_or(tc.steps);
            tc.n_sample = n_sample.unwrap_or(tc.n_sample);
            tc.seed = seed;
            train_cmd(&cfg, &tc, &data, &out_or("gan.ckpt"))
        }
        Command::Generate { checkpoint, count, cols } => {
            ensure!(count >= 1 && cols >= 1, Contract, "count and cols must be positive");
            let models = load_models(&checkpoint, &cfg)?;
            let z = sample_latent(count, models.g.spec.input_shape[0], cfg.train.prior, &mut Prng::new(seed));
            let y = models.g.predict(&z)?;
            if models.tabular {
                let path = out_or("samples.csv");
                write_transactions(&path, &unsquash_rows(&y)?, &vec![0; count])?;
                println!("wrote {count} rows to {}", path.display());
            } else {
                let path = out_or("samples.ppm");
                netpbm::write_image(&path, &Image::grid(&batch_images(&y)?, cols, 0)?)?;
                println!("wrote {count} samples to {}", path.display());
            }
            Ok(())
        }
        Command::Degrade { input, sigma, r, delta, q, sample_params } => {
            let params = if sample_params {
                let mut rng = Prng::new(seed);
                if cfg.degradation.integer_scale {
                    sample_degradation_integer(&mut rng)
                } else {
                    sample_degradation(&mut rng)
                }
            } else {
                let d = cfg.degradation.params;
                DegradationParams::new(
                    sigma.unwrap_or(d.sigma),
                    r.unwrap_or(d.r),
                    delta.unwrap_or(d.delta),
                    q.unwrap_or(d.q),
                )?
            };
            let img = netpbm::read_image(&input)?;
            let out_img = Image::from_unit(&degrade(&img.to_unit(), &params, &mut Prng::new(seed))?)?;
            let path = out_or("degraded.ppm");
            netpbm::write_image(&path, &out_img)?;
            println!("{params}");
            Ok(())
        }
        Command::Invert { checkpoint, input } => invert_cmd(&cfg, seed, &checkpoint, &input, &out_or("invert")),
        Command::Score { checkpoint, data, batch } => {
            score_cmd(&cfg, seed, &checkpoint, &data, batch, &out_or("scores.csv"))
        }
        Command::Eval { scores, threshold } => eval_cmd(&scores, threshold, &out_or("metrics.csv")),
        Command::LatentArith { checkpoint, data, attribute, per_group, bases, points } => {
            let opts = ArithOptions { attribute, per_group, bases, points };
            latent_arith_cmd(&cfg, seed, &checkpoint, &data, &opts, &out_or("latent_arith.ppm"))
        }
    }
}

fn count_ones(labels: &[u8]) -> usize {
    labels.iter().filter(|&&l| l == 1).count()
}

fn summary(cfg: &RunConfig, model: ModelChoice, out: Option<&Path>) -> Result<()> {
    let g = cfg.model.generator()?;
    let d = cfg.model.discriminator()?;
    let text = match model {
        ModelChoice::Discriminator => summarize(&d)?,
        ModelChoice::Generator => summarize(&g)?,
        ModelChoice::Composite => summarize(&build_composite(&g, &d)?)?,
    };
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn is_tabular_path(data: &Path) -> bool {
    data.is_file()
}

/// Normal rows of a face directory or a transaction CSV, as network input.
fn normal_rows(data: &Path) -> Result<Tensor> {
    if is_tabular_path(data) {
        let (rows, labels) = read_transactions(data)?;
        let keep: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
        ensure!(!keep.is_empty(), Contract, "{}: no normal rows", data.display());
        squash_rows(&rows.select_rows(&keep)?)
    } else {
        let ds = load_image_dataset(data)?;
        let normals: Vec<Image> =
            ds.images.into_iter().zip(&ds.labels).filter(|(_, &l)| l == 0).map(|(im, _)| im).collect();
        ensure!(!normals.is_empty(), Contract, "{}: no normal images", data.display());
        image_batch(&normals)
    }
}

fn tabular_specs(cfg: &RunConfig, features: usize) -> Result<(ModelSpec, ModelSpec)> {
    let c = build_tabular_gan(features, cfg.model.latent_dim, &cfg.model.tabular_hidden)?;
    let d = c.standalone_discriminator();
    Ok((c.generator, d))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn train_cmd(cfg: &RunConfig, tc: &crate::train::TrainConfig, data: &Path, out: &Path) -> Result<()> {
    let rows = normal_rows(data)?;
    let tabular = is_tabular_path(data);
    let (g, d) = if tabular {
        tabular_specs(cfg, rows.shape()[1])?
    } else {
        (cfg.model.generator()?, cfg.model.discriminator()?)
    };
    let gan = Gan::init(g, d, cfg.adam, tc.seed)?;
    let prior = tc.prior;
    let (gan, history) = train(&rows, gan, tc, |step, gan| {
        checkpoint::write_checkpoint(&with_suffix(out, &format!(".step{step:06}")), &gan.generator, &gan.discriminator)?;
        if !tabular {
            let z = sample_latent(25, gan.latent_dim(), prior, &mut Prng::new(tc.seed));
            let grid = Image::grid(&batch_images(&gan.generator.predict(&z)?)?, 5, 0)?;
            netpbm::write_image(&with_suffix(out, &format!(".step{step:06}.ppm")), &grid)?;
        }
        eprintln!("step {step}: checkpoint written");
        Ok(())
    })?;
    checkpoint::write_checkpoint(out, &gan.generator, &gan.discriminator)?;
    let mut csv = Vec::new();
    history.write_csv(&mut csv).map_err(|e| Error::io(out, e))?;
    write_atomic(&with_suffix(out, ".history.csv"), &csv)?;
    if let Some(last) = history.steps.last() {
        println!(
            "trained {} steps on {} rows: d_loss={:.4} g_loss={:.4} d_acc={:.3}",
            history.len(),
            rows.shape()[0],
            last.d_loss,
            last.g_loss,
            last.d_accuracy
        );
    }
    println!("checkpoint {}", out.display());
    Ok(())
}

struct Models {
    g: Network,
    d: Network,
    tabular: bool,
}

/// Rebuilds the networks a checkpoint holds. Image checkpoints use the
/// configured architecture; tabular ones are recognized by their dense-only
/// generator and sized from its last bias.
fn load_models(path: &Path, cfg: &RunConfig) -> Result<Models> {
    let bytes = read_bytes(path)?;
    let tensors = checkpoint::decode(&bytes)?;
    let tabular = !tensors.iter().any(|t| t.name.starts_with("generator/conv2d"));
    let (g_spec, d_spec) = if tabular {
        let last_bias = tensors
            .iter()
            .rfind(|t| t.name.starts_with("generator/") && t.name.ends_with("/bias"))
            .ok_or_else(|| Error::Checkpoint("no generator tensors".into()))?;
        tabular_specs(cfg, last_bias.tensor.len())?
    } else {
        (cfg.model.generator()?, cfg.model.discriminator()?)
    };
    let (g, d) = checkpoint::decode_gan(&bytes, &g_spec, &d_spec)?;
    Ok(Models { g, d, tabular })
}

fn to_gray(map: &Tensor) -> Result<Image> {
    let (h, w) = (map.shape()[0], map.shape()[1]);
    Image::new(h, w, 1, map.data().iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect())
}

fn invert_cmd(cfg: &RunConfig, seed: u64, ck: &Path, input: &Path, out: &Path) -> Result<()> {
    let m = load_models(ck, cfg)?;
    ensure!(!m.tabular, Contract, "invert works on image checkpoints; use score for tabular data");
    let x = image_batch(&[netpbm::read_image(input)?])?;
    let r = invert_batch(&m.g, &x, Some(&m.d), &cfg.inversion, &mut Prng::new(seed))?.remove(0);
    let z = Tensor::new(vec![1, r.z_star.dim()], r.z_star.0.clone())?;
    let gz = m.g.predict(&z)?;
    let shape = &x.shape()[1..];
    let heat = residual_map(&x.clone().reshape(shape)?, &gz.clone().reshape(shape)?)?;
    create_dir_all(out)?;
    netpbm::write_image(&out.join("reconstruction.ppm"), &batch_images(&gz)?[0])?;
    netpbm::write_image(&out.join("residual.pgm"), &to_gray(&heat)?)?;
    let mut trace = String::from("step,loss\n");
    for (i, v) in r.trace.iter().enumerate() {
        trace.push_str(&format!("{i},{v}\n"));
    }
    write_atomic(&out.join("trace.csv"), trace.as_bytes())?;
    let q = quadrant_means(&heat)?;
    println!("score={}", r.score);
    println!("quadrant_means={:.4},{:.4},{:.4},{:.4}", q[0], q[1], q[2], q[3]);
    Ok(())
}

fn score_reports(m: &Models, x: &Tensor, cfg: &RunConfig, seed: u64, batch: usize) -> Result<Vec<AnomalyReport>> {
    ensure!(batch >= 1, Contract, "batch must be positive");
    let mut rng = Prng::new(seed);
    let n = x.shape()[0];
    let mut reports = Vec::with_capacity(n);
    for start in (0..n).step_by(batch) {
        let part = x.slice_outer(start, batch.min(n - start))?;
        reports.extend(invert_batch(&m.g, &part, Some(&m.d), &cfg.inversion, &mut rng.fork())?);
    }
    Ok(reports)
}

fn score_cmd(cfg: &RunConfig, seed: u64, ck: &Path, data: &Path, batch: usize, out: &Path) -> Result<()> {
    let m = load_models(ck, cfg)?;
    let (ids, labels, x): (Vec<String>, Vec<u8>, Tensor) = if is_tabular_path(data) {
        ensure!(m.tabular, Contract, "{} holds an image model but {} is tabular", ck.display(), data.display());
        let (rows, labels) = read_transactions(data)?;
        ((0..labels.len()).map(|i| i.to_string()).collect(), labels, squash_rows(&rows)?)
    } else {
        ensure!(!m.tabular, Contract, "{} holds a tabular model but {} is an image set", ck.display(), data.display());
        let ds = load_image_dataset(data)?;
        ((0..ds.len()).map(image_filename).collect(), ds.labels.clone(), image_batch(&ds.images)?)
    };
    let reports = score_reports(&m, &x, cfg, seed, batch)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "label", "score"])?;
    for ((id, label), r) in ids.iter().zip(&labels).zip(&reports) {
        w.write_record([id.clone(), label.to_string(), r.score.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(out, e.into_error()))?;
    write_atomic(out, &bytes)?;
    let scores: Vec<f64> = reports.iter().map(|r| r.score).collect();
    if labels.contains(&0) && labels.contains(&1) {
        println!("auc={}", crate::metrics::roc_auc(&scores, &labels)?);
    }
    println!("wrote {} scores to {}", scores.len(), out.display());
    Ok(())
}

fn read_scores(path: &Path) -> Result<(Vec<f64>, Vec<u8>)> {
    let bytes = read_bytes(path)?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let header = r.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Contract(format!("{}: no {name} column", path.display())))
    };
    let (si, li) = (col("score")?, col("label")?);
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Contract(format!("{} row {}: bad {what}", path.display(), line + 1));
        scores.push(rec.get(si).and_then(|v| v.trim().parse().ok()).ok_or_else(|| bad("score"))?);
        labels.push(rec.get(li).and_then(|v| v.trim().parse().ok()).ok_or_else(|| bad("label"))?);
    }
    ensure!(!scores.is_empty(), Contract, "{}: no rows", path.display());
    Ok((scores, labels))
}

fn eval_cmd(path: &Path, threshold: Option<f64>, out: &Path) -> Result<()> {
    let (scores, labels) = read_scores(path)?;
    let threshold = match threshold {
        Some(t) => t,
        None => best_f1_threshold(&scores, &labels)?,
    };
    let report = pr_metrics(&scores, &labels, threshold)?;
    write_atomic(out, format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.csv_row()).as_bytes())?;
    println!("{report}");
    Ok(())
}

struct ArithOptions {
    attribute: Attribute,
    per_group: usize,
    bases: usize,
    points: usize,
}

fn latent_arith_cmd(cfg: &RunConfig, seed: u64, ck: &Path, data: &Path, o: &ArithOptions, out: &Path) -> Result<()> {
    ensure!(o.per_group >= 1 && o.bases >= 1 && o.points >= 2, Contract, "need per_group, bases >= 1 and points >= 2");
    let m = load_models(ck, cfg)?;
    ensure!(!m.tabular, Contract, "latent arithmetic needs an image checkpoint");
    let ds = load_image_dataset(data)?;
    let (mut with, mut without) = (Vec::new(), Vec::new());
    for ((im, &label), rec) in ds.images.iter().zip(&ds.labels).zip(&ds.provenance) {
        if label != 0 {
            continue;
        }
        let has = match o.attribute {
            Attribute::Glasses => rec.face.glasses,
            Attribute::Smile => rec.face.smile > 0.0,
        };
        let group = if has { &mut with } else { &mut without };
        if group.len() < o.per_group {
            group.push(im.clone());
        }
    }
    ensure!(
        !with.is_empty() && !without.is_empty(),
        Contract,
        "{} lacks normal faces on both sides of the attribute",
        data.display()
    );
    let mut rng = Prng::new(seed);
    let latents = |images: &[Image], rng: &mut Prng| -> Result<Vec<LatentVector>> {
        let x = image_batch(images)?;
        Ok(invert_batch(&m.g, &x, Some(&m.d), &cfg.inversion, rng)?.into_iter().map(|r| r.z_star).collect())
    };
    let za = latents(&with, &mut rng)?;
    let zb = latents(&without, &mut rng)?;
    let v = attribute_vector(&za, &zb)?;
    let dim = v.dim();
    let base = sample_latent(o.bases, dim, cfg.train.prior, &mut rng);
    let mut rows = Vec::with_capacity(o.bases * o.points * dim);
    for b in base.data().chunks_exact(dim) {
        let z = LatentVector(b.to_vec());
        for k in 0..o.points {
            let t = k as f64 / (o.points - 1) as f64;
            rows.extend(interpolate_latent(&z, &v, t)?.0);
        }
    }
    let y = m.g.predict(&Tensor::new(vec![o.bases * o.points, dim], rows)?)?;
    netpbm::write_image(out, &Image::grid(&batch_images(&y)?, o.points, 0)?)?;
    let norm = v.values().iter().map(|x| x * x).sum::<f64>().sqrt();
    println!("groups {}/{}; |v|={norm:.4}; wrote {}", za.len(), zb.len(), out.display());
    Ok(())
}
