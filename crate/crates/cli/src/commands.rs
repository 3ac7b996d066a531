use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use anyhow::Context;
use awblstm::checkpoint;
use awblstm::corpus::{
    extract_instances, generate_synthetic_corpus, label_histogram, parse_corpus, partition, write_instances,
    InstanceRecord, Label, PairInstance, PosSidecar, PosSource, SynthConfig,
};
use awblstm::embeddings::{encode, load_pretrained_word_vectors, PartitionedEncoding, Vocabulary};
use awblstm::model::Model;
use awblstm::train::{evaluate, predict_all, train as run_training, Control, EpochLog, TrainOptions};
use awblstm::verify::{run_suite, Suite};
use serde::Serialize;

use crate::args::{EvalArgs, PredictArgs, PreprocessArgs, ReportFormat, SuiteArg, SynthArgs, TrainArgs, VerifyArgs};
use crate::{settings, UsageError};

fn require_exists(path: &Path, what: &str) -> anyhow::Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(UsageError(format!("{what} {} does not exist", path.display())).into())
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn print_histogram(title: &str, instances: &[PairInstance]) {
    let h = label_histogram(instances.iter().map(|i| &i.label));
    println!("{title}: {} instances", instances.len());
    for l in Label::ALL {
        println!("  {:<10} {}", l.name(), h[l.index()]);
    }
}

fn encode_all(instances: &[PairInstance], model: &Model) -> Vec<PartitionedEncoding> {
    instances
        .iter()
        .map(|i| encode(&partition(i), &model.vocab, &model.config))
        .collect()
}

pub fn preprocess(a: PreprocessArgs) -> anyhow::Result<ExitCode> {
    require_exists(&a.corpus, "corpus")?;
    if let Some(p) = &a.pos_sidecar {
        require_exists(p, "POS sidecar")?;
    }
    if a.min_word_freq == 0 {
        return Err(UsageError("--min-word-freq must be positive".into()).into());
    }
    let sentences = parse_corpus(&a.corpus)?;
    let pos = match &a.pos_sidecar {
        Some(p) => PosSource::Sidecar(PosSidecar::load(p)?),
        None => PosSource::Fallback,
    };
    let (instances, skipped) = extract_instances(&sentences, &pos);
    for e in &skipped {
        log::warn!("skipped pair: {e}");
    }
    let mut out = create(&a.out)?;
    write_instances(&mut out, &instances)?;
    out.flush()?;
    let vocab = Vocabulary::build(&instances, a.min_word_freq);
    fs::write(&a.vocab_out, vocab.to_json() + "\n")
        .with_context(|| format!("writing {}", a.vocab_out.display()))?;
    println!("sentences: {}", sentences.len());
    print_histogram("instances", &instances);
    println!("skipped pairs: {}", skipped.len());
    println!("vocabulary: {} words, {} POS tags", vocab.word_count(), vocab.pos_count());
    Ok(ExitCode::SUCCESS)
}

pub fn train(a: TrainArgs) -> anyhow::Result<ExitCode> {
    require_exists(&a.data, "training data")?;
    for (p, what) in [
        (&a.config, "config file"),
        (&a.vocab, "vocabulary"),
        (&a.pretrained_vectors, "pretrained vectors"),
        (&a.monitor, "monitor data"),
    ] {
        if let Some(p) = p {
            require_exists(p, what)?;
        }
    }
    let cfg = settings::resolve(a.config.as_deref(), &a.model)?;
    let instances = InstanceRecord::read_labeled(&a.data)?;
    if instances.is_empty() {
        anyhow::bail!("{} contains no instances", a.data.display());
    }
    let vocab = match &a.vocab {
        Some(p) => Vocabulary::from_json(&fs::read_to_string(p)?)?,
        None => Vocabulary::build(&instances, cfg.min_word_freq),
    };
    let mut model = Model::new(cfg, vocab);
    if let Some(p) = &a.pretrained_vectors {
        let cov = load_pretrained_word_vectors(p, &model.vocab, &mut model.params.embeddings.word)?;
        println!(
            "pretrained vectors: {}/{} vocabulary entries ({:.1}%)",
            cov.matched,
            cov.vocab_size,
            100.0 * cov.fraction()
        );
    }
    let data = encode_all(&instances, &model);
    let monitor = match &a.monitor {
        Some(p) => Some(encode_all(&InstanceRecord::read_labeled(p)?, &model)),
        None => None,
    };

    let mut log_file = create(&a.log)?;
    writeln!(log_file, "{}", EpochLog::CSV_HEADER)?;
    log_file.flush()?;
    let mut write_err = None;
    let opts = TrainOptions {
        record_wall_time: a.record_wall_time,
    };
    let log = run_training(&mut model, &data, &opts, |row, m| {
        if let Err(e) = writeln!(log_file, "{}", row.csv_row()).and_then(|()| log_file.flush()) {
            write_err = Some(e);
            return Control::Stop;
        }
        let mut line = format!("epoch {:>3}  train_loss {:.4}", row.epoch, row.train_loss);
        if let (Some(l), Some(f)) = (row.val_loss, row.val_macro_f1_5class) {
            line += &format!("  val_loss {l:.4}  val_macro5_f1 {f:.4}");
        }
        let mut control = Control::Continue;
        if let Some(mon) = &monitor {
            match evaluate(m, mon) {
                Ok((_, r)) => {
                    line += &format!("  monitor_macro5_f1 {:.4}", r.macro5.f1);
                    if a.stop_at_f1.is_some_and(|t| r.macro5.f1 >= t) {
                        control = Control::Stop;
                    }
                }
                Err(e) => log::warn!("monitor evaluation failed: {e}"),
            }
        }
        eprintln!("{line}");
        control
    })?;
    if let Some(e) = write_err {
        return Err(e).with_context(|| format!("writing {}", a.log.display()));
    }
    checkpoint::save(&model, &a.out_model)?;
    println!("epochs run: {}", log.len());
    if let Some(last) = log.last() {
        match (last.val_loss, last.val_macro_f1_4class, last.val_macro_f1_5class) {
            (Some(l), Some(f4), Some(f5)) => {
                println!("final validation: loss {l:.4}, macro4 F1 {f4:.4}, macro5 F1 {f5:.4}")
            }
            _ => println!("final training loss {:.4} (no validation split)", last.train_loss),
        }
    }
    println!("checkpoint: {}", a.out_model.display());
    Ok(ExitCode::SUCCESS)
}

pub fn eval(a: EvalArgs) -> anyhow::Result<ExitCode> {
    require_exists(&a.model, "checkpoint")?;
    require_exists(&a.data, "data")?;
    let model = checkpoint::load(&a.model)?;
    let data = encode_all(&InstanceRecord::read_labeled(&a.data)?, &model);
    if data.is_empty() {
        anyhow::bail!("{} contains no instances", a.data.display());
    }
    let (_, report) = evaluate(&model, &data)?;
    let text = match a.format {
        ReportFormat::Table => report.to_table(),
        ReportFormat::Json => report.to_json() + "\n",
        ReportFormat::Csv => report.to_csv(),
    };
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct PredictionLine<'a> {
    sentence_id: &'a str,
    label: Label,
    probs: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    attention: Option<AttentionDump<'a>>,
}

#[derive(Serialize)]
struct AttentionDump<'a> {
    /// Tokens in part order, PAD included, matching the weight vectors.
    tokens: Vec<String>,
    alpha1: &'a [f64],
    alpha2: &'a [f64],
    alpha: &'a [f64],
    beta: &'a [f64],
}

pub fn predict(a: PredictArgs) -> anyhow::Result<ExitCode> {
    require_exists(&a.model, "checkpoint")?;
    require_exists(&a.input, "input")?;
    let model = checkpoint::load(&a.model)?;
    let instances = InstanceRecord::read_unlabeled(&a.input)?;
    let data = encode_all(&instances, &model);
    let preds = predict_all(&model, &data)?;
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    for (enc, p) in data.iter().zip(&preds) {
        let attention = a.dump_attention.then(|| AttentionDump {
            tokens: enc
                .parts
                .iter()
                .flat_map(|part| part.words.iter().map(|&w| model.vocab.words()[w].clone()))
                .collect(),
            alpha1: &p.alpha1,
            alpha2: &p.alpha2,
            alpha: &p.alpha,
            beta: &p.beta,
        });
        let line = PredictionLine {
            sentence_id: &enc.sentence_id,
            label: p.label,
            probs: &p.probs,
            attention,
        };
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

pub fn synth(a: SynthArgs) -> anyhow::Result<ExitCode> {
    let cfg = SynthConfig {
        balanced: !a.unbalanced,
        ..SynthConfig::with_sizes(a.train_size, a.test_size)
    };
    if a.train_size == 0 || a.test_size == 0 {
        return Err(UsageError("--train-size and --test-size must be positive".into()).into());
    }
    let (train, test) = generate_synthetic_corpus(&cfg, a.seed)?;
    for (path, set) in [(&a.train_out, &train), (&a.test_out, &test)] {
        let mut w = create(path)?;
        write_instances(&mut w, set)?;
        w.flush()?;
    }
    print_histogram("train", &train);
    print_histogram("test", &test);
    Ok(ExitCode::SUCCESS)
}

pub fn verify(a: VerifyArgs) -> anyhow::Result<ExitCode> {
    let suites: Vec<Suite> = match a.suite {
        SuiteArg::Gradcheck => vec![Suite::Gradcheck],
        SuiteArg::Oracle => vec![Suite::Oracle],
        SuiteArg::Properties => vec![Suite::Properties],
        SuiteArg::All => Suite::ALL.to_vec(),
    };
    let mut ok = true;
    for s in suites {
        let r = run_suite(s, a.seed);
        println!("suite {}", r.suite);
        print!("{r}");
        ok &= r.passed();
    }
    println!("{}", if ok { "all checks passed" } else { "verification FAILED" });
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
