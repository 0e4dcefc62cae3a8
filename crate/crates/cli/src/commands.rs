use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, ValueEnum};
use masktok::ablate::{format_table, held_out_split, run_ablation, AblationSetup};
use masktok::autoencoder::checkpoint::{load_checkpoint, save_checkpoint};
use masktok::autoencoder::{Model, Trainer};
use masktok::corpus::{convert, gen_synthetic, AnnotatedSample, SampleKind, Templates};
use masktok::mask::pbm::{from_pbm, side_by_side};
use masktok::mask::{iou, Mask, MaskRecord};
use masktok::metrics::{match_sets, GresAccumulator, MatchPool};
use masktok::quant::{write_codebooks, Scheme};
use masktok::reward::mask_reward;
use masktok::words::{display_codes, vocab_manifest_text, Vocab};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::io::{create_output, echo_resolved, open_lines, write_json_line, Classify, CmdResult, Diagnostics, Failure};

/// Flags shared by every subcommand.
#[derive(Clone, Debug, Args, Serialize)]
pub struct Global {
    /// Seed for the model and the shape generator.
    #[arg(long, global = true, env = "MASKTOK_SEED")]
    pub seed: Option<u64>,
    /// Directory for outputs and the resolved config.
    #[arg(long, global = true, env = "MASKTOK_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
}

impl Global {
    fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn load_config(path: Option<&Path>, g: &Global) -> CmdResult<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p).usage()?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(g.seed, g.out_dir.as_deref());
    cfg.validate().usage()?;
    Ok(cfg)
}

fn load_model(path: &Path) -> CmdResult<Model> {
    Ok(load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display())).data()?.model)
}

/// Mask-word vocabulary matching a model's quantizer, if it has codes.
fn model_vocab(m: &Model) -> Option<Vocab> {
    let q = &m.config.quant;
    Vocab::new(q.level_size(), q.steps).ok()
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Serialize)]
struct TrainSummary {
    steps: u64,
    held_out: usize,
    r_acc: f64,
    utilization: f64,
    seconds: f64,
}

pub fn train(args: &TrainArgs, g: &Global) -> CmdResult {
    let cfg = load_config(args.config.as_deref(), g)?;
    let out = cfg.paths.out_dir.clone();
    echo_resolved(&out, "train", args, Some(&cfg))?;

    let data = gen_synthetic(&cfg.data).data()?;
    let held_out = gen_synthetic(&held_out_split(&cfg.data, cfg.eval.held_out)).data()?;
    let mut trainer = Trainer::new(Model::init(cfg.train.clone()).usage()?);
    let start = Instant::now();
    let mut log = create_output(&cfg.paths.metrics_log())?;
    trainer.fit(&data, Some(&mut *log)).data()?;
    log.flush().context("writing metrics log").data()?;
    let seconds = start.elapsed().as_secs_f64();

    save_checkpoint(&cfg.paths.checkpoint(), &trainer).context("saving checkpoint").data()?;
    if matches!(cfg.train.quant.scheme, Scheme::Vq | Scheme::Rq) {
        let mut w = create_output(&out.join("codebooks.mtcb"))?;
        write_codebooks(&mut w, &trainer.model.codebooks).data()?;
        w.flush().context("writing codebooks").data()?;
    }
    let summary = TrainSummary {
        steps: trainer.step,
        held_out: held_out.len(),
        r_acc: trainer.model.eval_r_acc(&held_out).data()?,
        utilization: trainer.model.code_utilization(&held_out).data()?,
        seconds,
    };
    let text = serde_json::to_string_pretty(&summary).data()?;
    std::fs::write(out.join("train_summary.json"), &text).context("writing summary").data()?;
    println!("{text}");
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Args, Serialize)]
pub struct RoundtripArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// JSON Lines of `{"id"?, "width", "height", "rle_runs"}`, or one P1 PBM
    /// file (`.pbm`).
    #[arg(long)]
    pub masks: PathBuf,
}

#[derive(Deserialize)]
struct MaskLine {
    #[serde(default)]
    id: Option<String>,
    #[serde(flatten)]
    mask: MaskRecord,
}

#[derive(Serialize)]
struct RoundtripRow<'a> {
    id: &'a str,
    iou: f64,
    codes: &'a [usize],
    #[serde(skip_serializing_if = "Option::is_none")]
    display: Option<String>,
}

struct RoundtripSink {
    rows: Box<dyn Write>,
    table: Box<dyn Write>,
    render: Box<dyn Write>,
    iou_sum: f64,
    count: usize,
}

impl RoundtripSink {
    fn flush_batch(&mut self, model: &Model, vocab: Option<&Vocab>, batch: &mut Vec<(String, Mask)>) -> CmdResult {
        let masks: Vec<Mask> = batch.iter().map(|b| b.1.clone()).collect();
        let out = model.reconstruct_batch(&masks).data()?;
        for ((id, input), (rec, trace)) in batch.iter().zip(&out) {
            let score = iou(input, rec).data()?;
            let display = vocab.and_then(|v| display_codes(&trace.codes, v).ok());
            write_json_line(&mut *self.rows, &RoundtripRow { id, iou: score, codes: &trace.codes, display: display.clone() })?;
            let shown = display.unwrap_or_else(|| "-".into());
            writeln!(self.table, "{id:<24} {score:>8.4}  {shown}").context("writing report").data()?;
            writeln!(self.render, "{id}  IoU {score:.4}  {shown}\n{}", side_by_side(&[input, rec]))
                .context("writing render")
                .data()?;
            self.iou_sum += score;
            self.count += 1;
        }
        batch.clear();
        Ok(())
    }
}

pub fn roundtrip(args: &RoundtripArgs, g: &Global) -> CmdResult {
    let out = g.out_dir();
    echo_resolved::<_, ()>(&out, "roundtrip", args, None)?;
    let model = load_model(&args.checkpoint)?;
    let vocab = model_vocab(&model);
    let mut sink = RoundtripSink {
        rows: create_output(&out.join("roundtrip.jsonl"))?,
        table: create_output(&out.join("roundtrip.txt"))?,
        render: create_output(&out.join("roundtrip_render.txt"))?,
        iou_sum: 0.0,
        count: 0,
    };
    writeln!(sink.table, "{:<24} {:>8}  codes", "id", "IoU").context("writing report").data()?;
    let mut diag = Diagnostics::default();
    let mut batch: Vec<(String, Mask)> = Vec::new();

    if args.masks.extension().is_some_and(|e| e.eq_ignore_ascii_case("pbm")) {
        let text = std::fs::read_to_string(&args.masks).with_context(|| format!("reading {}", args.masks.display())).data()?;
        let m = from_pbm(&text).with_context(|| format!("parsing {}", args.masks.display())).data()?;
        let id = args.masks.file_stem().map_or("mask".into(), |s| s.to_string_lossy().into_owned());
        batch.push((id, m));
        diag.ok += 1;
    } else {
        for (i, line) in open_lines(&args.masks)?.enumerate() {
            let line = line.context("reading masks").data()?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: anyhow::Result<(String, Mask)> = (|| {
                let rec: MaskLine = serde_json::from_str(&line)?;
                let m = rec.mask.to_mask()?;
                Ok((rec.id.unwrap_or_else(|| format!("line-{}", i + 1)), m))
            })();
            match parsed {
                Ok(item) => {
                    diag.ok += 1;
                    batch.push(item);
                    if batch.len() == 256 {
                        sink.flush_batch(&model, vocab.as_ref(), &mut batch)?;
                    }
                }
                Err(e) => diag.record(i + 1, None, e),
            }
        }
    }
    sink.flush_batch(&model, vocab.as_ref(), &mut batch)?;
    if sink.count == 0 {
        return Err(Failure::Data(anyhow!("{}: no masks to reconstruct", args.masks.display())));
    }
    let mean = sink.iou_sum / sink.count as f64;
    writeln!(sink.table, "mean r-Acc {mean:.6} over {} masks", sink.count).context("writing report").data()?;
    for w in [&mut sink.rows, &mut sink.table, &mut sink.render] {
        w.flush().context("writing report").data()?;
    }
    println!("r_acc {mean:.6} masks {}", sink.count);
    diag.summary("roundtrip");
    if diag.failed > 0 {
        return Err(Failure::Data(anyhow!("{} records could not be read", diag.failed)));
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Args, Serialize)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Cells such as `vq-1024,rq-1024x2`; overrides `[ablate] cells`.
    #[arg(long, value_delimiter = ',')]
    pub cells: Vec<String>,
    /// Overrides `[ablate] seeds`.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
}

pub fn ablate(args: &AblateArgs, g: &Global) -> CmdResult {
    let mut cfg = load_config(args.config.as_deref(), g)?;
    if !args.cells.is_empty() {
        cfg.ablate.cells = args.cells.clone();
    }
    if !args.seeds.is_empty() {
        cfg.ablate.seeds = args.seeds.clone();
    }
    let cells = cfg.ablate.parsed_cells().usage()?;
    if cells.is_empty() {
        return Err(Failure::Usage(anyhow!("no ablation cells given")));
    }
    let seeds = if cfg.ablate.seeds.is_empty() { vec![cfg.train.seed] } else { cfg.ablate.seeds.clone() };
    let out = cfg.paths.out_dir.clone();
    echo_resolved(&out, "ablate", args, Some(&cfg))?;

    let base = AblationSetup {
        train: cfg.train.clone(),
        held_out: held_out_split(&cfg.data, cfg.eval.held_out),
        data: cfg.data.clone(),
    };
    let mut rows = Vec::new();
    for seed in seeds {
        rows.extend(run_ablation(&base.with_seed(seed), &cells).data()?);
    }
    let mut w = create_output(&out.join("ablation.jsonl"))?;
    for r in &rows {
        write_json_line(&mut *w, r)?;
    }
    w.flush().context("writing ablation table").data()?;
    let table = format_table(&rows);
    std::fs::write(out.join("ablation.txt"), &table).context("writing ablation table").data()?;
    print!("{table}");
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        return Err(Failure::Data(anyhow!("{failed} of {} cells failed", rows.len())));
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KindFilter {
    All,
    RegionCaption,
    Gcg,
    Res,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct ConvertArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Annotated samples, one JSON object per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Dialogue output; `-` for stdout. Defaults to `<out-dir>/dialogues.jsonl`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Only accept samples of this kind; others are reported as errors.
    #[arg(long, value_enum, default_value_t = KindFilter::All)]
    pub kind: KindFilter,
    /// Instruction templates (JSON); the bundled ones by default.
    #[arg(long)]
    pub templates: Option<PathBuf>,
}

pub fn convert_corpus(args: &ConvertArgs, g: &Global) -> CmdResult {
    let out = g.out_dir();
    echo_resolved::<_, ()>(&out, "convert", args, None)?;
    let templates = match &args.templates {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).usage()?;
            Templates::from_json(&text).with_context(|| format!("parsing {}", p.display())).usage()?
        }
        None => Templates::default(),
    };
    let model = load_model(&args.checkpoint)?;
    let vocab = model_vocab(&model)
        .ok_or_else(|| anyhow!("checkpoint quantizer has no discrete codes"))
        .data()?;
    let wanted = match args.kind {
        KindFilter::All => None,
        KindFilter::RegionCaption => Some(SampleKind::RegionCaption),
        KindFilter::Gcg => Some(SampleKind::Gcg),
        KindFilter::Res => Some(SampleKind::Res),
    };
    let mut w = create_output(&args.output.clone().unwrap_or_else(|| out.join("dialogues.jsonl")))?;
    let mut diag = Diagnostics::default();
    for (i, line) in open_lines(&args.input)?.enumerate() {
        let line = line.context("reading corpus").data()?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: AnnotatedSample = match serde_json::from_str(&line) {
            Ok(s) => s,
            Err(e) => {
                diag.record(i + 1, None, e);
                continue;
            }
        };
        if wanted.is_some_and(|k| k != sample.kind) {
            diag.record(i + 1, Some(&sample.id), format!("sample kind {:?} does not match --kind", sample.kind));
            continue;
        }
        match convert(&sample, &vocab, &model, &templates) {
            Ok(d) => {
                write_json_line(&mut *w, &d)?;
                diag.ok += 1;
            }
            Err(e) => diag.record(i + 1, Some(&sample.id), e),
        }
    }
    w.flush().context("writing dialogues").data()?;
    diag.summary("convert");
    if diag.failed > 0 {
        return Err(Failure::Data(anyhow!("{} samples failed to convert", diag.failed)));
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Args, Serialize)]
pub struct VocabArgs {
    #[arg(long, default_value_t = 256)]
    pub codebook_size: usize,
    #[arg(long, default_value_t = 2)]
    pub steps: usize,
}

impl VocabArgs {
    fn vocab(&self) -> CmdResult<Vocab> {
        Vocab::new(self.codebook_size, self.steps).usage()
    }
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct RewardArgs {
    /// JSON Lines of `{"id", "pred_text", "gt_text"}`.
    #[arg(long)]
    pub input: PathBuf,
    /// Score output; `-` for stdout. Defaults to `<out-dir>/rewards.jsonl`.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub vocab: VocabArgs,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RewardIn {
    id: String,
    pred_text: String,
    gt_text: String,
}

#[derive(Serialize)]
struct RewardOut<'a> {
    id: &'a str,
    n_tp: usize,
    n_pred: usize,
    n_gt: usize,
    reward: f64,
}

/// Unreadable records are reported and skipped; only I/O failures change
/// the exit status.
pub fn reward(args: &RewardArgs, g: &Global) -> CmdResult {
    let out = g.out_dir();
    echo_resolved::<_, ()>(&out, "reward", args, None)?;
    let v = args.vocab.vocab()?;
    let mut w = create_output(&args.output.clone().unwrap_or_else(|| out.join("rewards.jsonl")))?;
    let mut diag = Diagnostics::default();
    for (i, line) in open_lines(&args.input)?.enumerate() {
        let line = line.context("reading rollouts").data()?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RewardIn>(&line) {
            Ok(r) => {
                let b = mask_reward(&r.pred_text, &r.gt_text, &v);
                let rec = RewardOut { id: &r.id, n_tp: b.n_tp, n_pred: b.n_pred, n_gt: b.n_gt, reward: b.reward };
                write_json_line(&mut *w, &rec)?;
                diag.ok += 1;
            }
            Err(e) => diag.record(i + 1, None, e),
        }
    }
    w.flush().context("writing rewards").data()?;
    diag.summary("reward");
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// gIoU, cIoU and N-acc over one (possibly empty) region per record.
    Gres,
    /// Greedy set matching: precision and recall at the threshold, mean IoU.
    Matchset,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct MetricsArgs {
    #[arg(long, value_enum)]
    pub kind: MetricKind,
    /// Predictions: JSON Lines of `{"id", "masks": [mask records]}`.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground truth in the same format and order as `--pred`.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MasksLine {
    id: String,
    #[serde(default)]
    masks: Vec<MaskRecord>,
}

impl MasksLine {
    fn decode(&self) -> anyhow::Result<Vec<Mask>> {
        Ok(self.masks.iter().map(MaskRecord::to_mask).collect::<masktok::Result<_>>()?)
    }

    /// Union of all masks, `None` if there are none.
    fn union(&self) -> anyhow::Result<Option<Mask>> {
        let mut it = self.decode()?.into_iter();
        let Some(first) = it.next() else { return Ok(None) };
        Ok(Some(it.try_fold(first, |acc, m| acc.union(&m))?))
    }
}

pub fn metrics(args: &MetricsArgs, g: &Global) -> CmdResult {
    let out = g.out_dir();
    echo_resolved::<_, ()>(&out, "metrics", args, None)?;
    if !(args.threshold > 0.0 && args.threshold < 1.0) {
        return Err(Failure::Usage(anyhow!("--threshold must lie in (0, 1)")));
    }
    let mut per_sample = create_output(&out.join("metrics_per_sample.jsonl"))?;
    let mut gres = GresAccumulator::default();
    let mut pool = MatchPool::default();
    let mut diag = Diagnostics::default();
    let mut preds = open_lines(&args.pred)?;
    let mut truths = open_lines(&args.truth)?;
    let mut line = 0;
    loop {
        line += 1;
        let (p, t) = match (preds.next(), truths.next()) {
            (None, None) => break,
            (Some(p), Some(t)) => (p.context("reading predictions").data()?, t.context("reading truth").data()?),
            _ => return Err(Failure::Data(anyhow!("prediction and truth files differ in length at line {line}"))),
        };
        let scored: anyhow::Result<serde_json::Value> = (|| {
            let p: MasksLine = serde_json::from_str(&p).context("prediction")?;
            let t: MasksLine = serde_json::from_str(&t).context("truth")?;
            if p.id != t.id {
                anyhow::bail!("prediction id {:?} does not match truth id {:?}", p.id, t.id);
            }
            Ok(match args.kind {
                MetricKind::Gres => {
                    let score = gres.add(p.union()?.as_ref(), t.union()?.as_ref())?;
                    serde_json::json!({ "id": p.id, "iou": score })
                }
                MetricKind::Matchset => {
                    let s = match_sets(&p.decode()?, &t.decode()?, args.threshold)?;
                    pool.add(&s);
                    let r = s.report();
                    serde_json::json!({
                        "id": p.id, "hits": s.hits, "n_pred": s.n_pred, "n_truth": s.n_truth,
                        "mean_matched_iou": r.mean_matched_iou,
                    })
                }
            })
        })();
        match scored {
            Ok(v) => {
                write_json_line(&mut *per_sample, &v)?;
                diag.ok += 1;
            }
            Err(e) => diag.record(line, None, e),
        }
    }
    per_sample.flush().context("writing per-sample metrics").data()?;
    let report = match args.kind {
        MetricKind::Gres => gres.report(),
        MetricKind::Matchset => pool.report(),
    };
    let text = serde_json::to_string_pretty(&report).data()?;
    std::fs::write(out.join("metrics_report.json"), &text).context("writing report").data()?;
    println!("{text}");
    diag.summary("metrics");
    if report.sample_count == 0 {
        return Err(Failure::Data(anyhow!("no scorable records")));
    }
    if diag.failed > 0 {
        return Err(Failure::Data(anyhow!("{} records could not be scored", diag.failed)));
    }
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Args, Serialize)]
pub struct VocabCmdArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub vocab: VocabArgs,
    /// Manifest output; `-` (the default) for stdout.
    #[arg(long, default_value = "-")]
    pub output: PathBuf,
}

pub fn vocab(args: &VocabCmdArgs, g: &Global) -> CmdResult {
    echo_resolved::<_, ()>(&g.out_dir(), "vocab", args, None)?;
    let v = args.vocab.vocab()?;
    let mut w = create_output(&args.output)?;
    w.write_all(vocab_manifest_text(&v).as_bytes()).context("writing manifest").data()?;
    w.flush().context("writing manifest").data()
}
