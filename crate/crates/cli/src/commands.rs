use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use pixelbytes::checkpoint;
use pixelbytes::control::{build_control_traces, diffusion_control_rollout, ControlTrace, StateSpace};
use pixelbytes::metrics::{MeanStd, MetricReport};
use pixelbytes::model::{Mode, SeqModel};
use pixelbytes::rng::derive;
use pixelbytes::sequence::{reduce_modalities, Canvas, ContextArray, ContextRow, WindowedDataset, CONTEXT_WIDTH};
use pixelbytes::tokenizer::PAD;
use pixelbytes::trainer::{init_model, train_model};
use pixelbytes::{pxtk, Palette, Token, TokenStream, Tokenizer, VOCAB_SIZE};
use rand::seq::SliceRandom;

use crate::config::{GenerateConfig, RunConfig};
use crate::corpus;

pub struct Ctx<'a> {
    pub seed: u64,
    pub out: &'a Path,
    pub config: RunConfig,
}

impl Ctx<'_> {
    fn tokenizer(&self) -> Result<Tokenizer> {
        Ok(match &self.config.palette {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
                Tokenizer::new(Palette::parse(&text).with_context(|| format!("bad palette {}", p.display()))?)
            }
            None => Tokenizer::default(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let p = self.path(name);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
        std::fs::write(&p, contents).with_context(|| format!("cannot write {}", p.display()))?;
        Ok(p)
    }
}

fn read_corpus(path: &Path) -> Result<Vec<TokenStream>> {
    pxtk::read_file(path).with_context(|| format!("cannot load corpus {}", path.display()))
}

fn load_checkpoint(path: &Path) -> Result<SeqModel> {
    Ok(checkpoint::load_model(path)
        .with_context(|| format!("cannot load checkpoint {}", path.display()))?
        .0)
}

pub fn tokenize(ctx: &Ctx, input: &Path) -> Result<()> {
    let tk = ctx.tokenizer()?;
    let records = corpus::load_dir(input, &tk)?;
    pxtk::write_file(&ctx.path("corpus.pxtk"), &records)?;
    let c = corpus::count(&records);
    println!("records: {}", c.records);
    println!("text: {}", c.text);
    println!("image: {}", c.image);
    println!("audio: {}", c.audio);
    println!("modality_switch: {}", c.modality_switch);
    Ok(())
}

pub fn detokenize(ctx: &Ctx, input: &Path) -> Result<()> {
    let tk = ctx.tokenizer()?;
    let records = read_corpus(input)?;
    for (i, r) in records.iter().enumerate() {
        corpus::write_record(ctx.out, i, r, &tk, ctx.config.sample_rate)?;
    }
    println!("records: {}", records.len());
    Ok(())
}

fn reduce(records: &[TokenStream], ctx: &Ctx) -> Result<Vec<TokenStream>> {
    let t = &ctx.config.train;
    Ok(records
        .iter()
        .map(|r| reduce_modalities(r, t.audio_reduction, t.image_reduction))
        .collect::<pixelbytes::Result<_>>()?)
}

pub fn build_seq(ctx: &Ctx, input: &Path) -> Result<()> {
    let reduced = reduce(&read_corpus(input)?, ctx)?;
    pxtk::write_file(&ctx.path("reduced.pxtk"), &reduced)?;
    let mut csv = String::from("record,row,c0,c1,c2,c3,c4,c5,target\n");
    let mut rows = 0;
    for (i, r) in reduced.iter().enumerate() {
        let a = ContextArray::from_stream(r)?;
        for (j, (c, t)) in a.contexts.iter().zip(&a.targets).enumerate() {
            let cs: Vec<String> = c.iter().map(Token::to_string).collect();
            writeln!(csv, "{i},{j},{},{t}", cs.join(","))?;
        }
        rows += a.len();
    }
    ctx.write("contexts.csv", csv)?;
    println!("records: {}", reduced.len());
    println!("rows: {rows}");
    Ok(())
}

fn trace_csv(trace: &ControlTrace) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf)?;
    Ok(buf)
}

pub fn gen_control(ctx: &Ctx) -> Result<()> {
    let tk = Tokenizer::default();
    let traces = build_control_traces(&ctx.config.control, ctx.seed)?;
    let mut records = Vec::with_capacity(traces.len());
    for (i, t) in traces.iter().enumerate() {
        ctx.write(&format!("traces/trace_{i:04}.csv"), trace_csv(t)?)?;
        if !t.is_empty() {
            records.push(t.to_tokens(&tk)?);
        }
    }
    pxtk::write_file(&ctx.path("control.pxtk"), &records)?;
    println!("traces: {}", traces.len());
    println!("tokens: {}", records.iter().map(TokenStream::len).sum::<usize>());
    Ok(())
}

fn contexts(records: &[TokenStream]) -> Result<Vec<ContextArray>> {
    Ok(records.iter().map(ContextArray::from_stream).collect::<pixelbytes::Result<_>>()?)
}

pub fn train(ctx: &Ctx, input: &Path, val: Option<&Path>, mode: Option<&str>, epochs: Option<usize>) -> Result<()> {
    let mut model_cfg = ctx.config.model;
    if let Some(m) = mode {
        model_cfg.mode = m.parse()?;
    }
    let mut train_cfg = ctx.config.train;
    train_cfg.seed = ctx.seed;
    if let Some(e) = epochs {
        train_cfg.epochs = e;
    }
    let mut records = reduce(&read_corpus(input)?, ctx)?;
    let val_records = match val {
        Some(p) => reduce(&read_corpus(p)?, ctx)?,
        None => {
            let f = ctx.config.validation_fraction;
            ensure!((0.0..1.0).contains(&f), "validation_fraction must lie in [0, 1)");
            records.shuffle(&mut derive(ctx.seed, 0));
            let n_val = ((records.len() as f64 * f).round() as usize).max(1);
            ensure!(records.len() > n_val, "{} has too few records to hold out validation", input.display());
            records.split_off(records.len() - n_val)
        }
    };
    let train_set = WindowedDataset::new(contexts(&records)?, train_cfg.seq_len, train_cfg.stride)?;
    let val_set = WindowedDataset::new(contexts(&val_records)?, train_cfg.seq_len, train_cfg.seq_len)?;
    ensure!(!train_set.is_empty() && !val_set.is_empty(), "training and validation sets must be non-empty");
    let mut model = init_model(model_cfg, ctx.seed)?;
    let out = train_model(&mut model, &train_set, &val_set, &train_cfg, ctx.out)?;
    if let Some(last) = out.metrics.last() {
        println!("{}", pixelbytes::trainer::METRICS_HEADER);
        println!("{}", last.csv_row());
    }
    println!("best_epoch: {}", out.best_epoch);
    Ok(())
}

fn ids_text(tokens: &[Token]) -> String {
    tokens.iter().map(|t| format!("{t}\n")).collect()
}

/// Generated continuation of `prompt` with `want` tokens.
fn continue_prompt(
    model: &SeqModel,
    g: &GenerateConfig,
    rows: &[ContextRow],
    prompt: &[Token],
    want: usize,
    rng: &mut impl rand::Rng,
) -> Result<Vec<Token>> {
    let p = prompt.len();
    if model.config.mode == Mode::Diffusion {
        // Row p+j+1 carries token p+j in its last slot.
        let mut x = vec![rows.iter().copied().chain(std::iter::repeat_n([PAD; CONTEXT_WIDTH], want + 1)).collect::<Vec<_>>()];
        let mut known = vec![(0..p + want + 1).map(|i| i < p).collect::<Vec<_>>()];
        model.generate_diffusion(&mut x, &mut known, g.temperature, want + 1, rng)?;
        return Ok(x[0][p + 1..].iter().map(|r| r[CONTEXT_WIDTH - 1]).collect());
    }
    let width = if g.width == 0 { p + want } else { g.width };
    let mut canvas = [Canvas::with_tokens(g.height, width.max(1), prompt.to_vec())?];
    model.generate(&mut canvas, g.window, g.temperature, want, rng)?;
    Ok(canvas[0].tokens()[p..].to_vec())
}

pub fn generate(ctx: &Ctx, ckpt: &Path, input: &Path) -> Result<()> {
    let model = load_checkpoint(ckpt)?;
    let g = ctx.config.generate;
    let records = reduce(&read_corpus(input)?, ctx)?;
    let mut written = 0;
    for (i, r) in records.iter().enumerate() {
        let a = ContextArray::from_stream(r)?;
        if a.len() < 2 {
            continue;
        }
        let p = g.prompt_len.clamp(1, a.len() - 1);
        let want = g.max_len.min(a.len() - p);
        let mut rng = derive(ctx.seed, i as u64);
        let tokens = continue_prompt(&model, &g, &a.contexts[..p], &a.targets[..p], want, &mut rng)?;
        ctx.write(&format!("generated/sample_{i:04}.txt"), ids_text(&tokens))?;
        ctx.write(&format!("reference/sample_{i:04}.txt"), ids_text(&a.targets[p..p + want]))?;
        written += 1;
    }
    println!("samples: {written}");
    Ok(())
}

fn parse_ids(path: &Path) -> Result<Vec<Token>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.trim()
                .parse::<Token>()
                .ok()
                .filter(|&t| (t as usize) < VOCAB_SIZE)
                .with_context(|| format!("{}:{}: {l:?} is not a token id", path.display(), n + 1))
        })
        .collect()
}

fn id_files(path: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(path).with_context(|| format!("cannot read {}", path.display()))? {
        let p = e?.path();
        if p.is_file() {
            out.insert(p.file_name().expect("file").to_string_lossy().into_owned(), p);
        }
    }
    Ok(out)
}

pub fn eval(ctx: &Ctx, generated: &Path, reference: &Path) -> Result<()> {
    let pairs: Vec<(Vec<Token>, Vec<Token>)> = if generated.is_dir() {
        let (g, r) = (id_files(generated)?, id_files(reference)?);
        if g.keys().ne(r.keys()) {
            bail!("{} and {} hold different file names", generated.display(), reference.display());
        }
        g.values()
            .zip(r.values())
            .map(|(a, b)| Ok((parse_ids(a)?, parse_ids(b)?)))
            .collect::<Result<_>>()?
    } else {
        vec![(parse_ids(generated)?, parse_ids(reference)?)]
    };
    ensure!(!pairs.is_empty(), "nothing to evaluate");
    let report = MetricReport::from_pairs(pairs.iter().map(|(a, b)| (a.as_slice(), b.as_slice())));
    let text = format!("{report}\n");
    ctx.write("eval.txt", &text)?;
    print!("{text}");
    Ok(())
}

pub fn control_demo(ctx: &Ctx, ckpt: &Path, repetitions: Option<usize>) -> Result<()> {
    let model = load_checkpoint(ckpt)?;
    let [a, b, c] = ctx.config.plant;
    let sys = StateSpace::scalar(a, b, c);
    ensure!(sys.is_admissible(), "demo plant {:?} is not stable, controllable and observable", ctx.config.plant);
    let reps = repetitions.unwrap_or(ctx.config.repetitions);
    let mut traces = String::from("run,variant,t,setpoint,output,action,controller\n");
    let mut summary = String::from("run,seed,terminal_error,chatter_amplitude,diffusion_wins\n");
    let (mut errs, mut chatter, mut wins) = (Vec::new(), Vec::new(), 0);
    for run in 0..reps {
        let seed = ctx.seed.wrapping_add(run as u64);
        let o = diffusion_control_rollout(&model, &sys, &ctx.config.demo, seed)?;
        for (variant, t) in [("diffusion", &o.diffusion), ("bang_bang", &o.bang_bang)] {
            for row in String::from_utf8(trace_csv(t)?)?.lines().skip(1) {
                writeln!(traces, "{run},{variant},{row}")?;
            }
        }
        writeln!(summary, "{run},{seed},{},{},{}", o.terminal_error, o.chatter_amplitude, o.diffusion_wins())?;
        errs.push(o.terminal_error);
        chatter.push(o.chatter_amplitude);
        wins += usize::from(o.diffusion_wins());
    }
    ctx.write("traces.csv", traces)?;
    ctx.write("summary.csv", summary)?;
    println!("terminal_error: {}", MeanStd::of(&errs));
    println!("chatter_amplitude: {}", MeanStd::of(&chatter));
    println!("diffusion_wins: {wins}/{reps}");
    Ok(())
}
