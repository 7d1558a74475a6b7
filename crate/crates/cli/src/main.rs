//! `sublex` — command-line pipeline around the sublex library.
//!
//! Stages hand off through plain files (normalized corpora, unit model
//! TSVs, token files, ARPA models, graph directories, lattice
//! directories), so every intermediate artifact is independently
//! inspectable. All randomness is controlled by explicit seed flags;
//! identical inputs and seeds produce byte-identical outputs.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use sublex::corpus::{build_character_inventory, load_corpus, split_words, CharacterInventory};
use sublex::decode::{decode_lattice, DecodeConfig};
use sublex::eval::{evaluate_set, format_mmss, tune_hyperparameters, word_error_rate};
use sublex::graph::{
    build_search_graph, frame_table, graph_stats, read_graph_dir, unit_lexicon_entries,
    write_graph_dir,
};
use sublex::lattice::{
    greedy_collapse, read_lattice, read_manifest, synthesize_lattice, write_lattice,
    write_manifest, ManifestEntry, NoiseSpec, PosteriorLattice,
};
use sublex::lm::{count_ngrams, estimate_kneser_ney, NgramModel};
use sublex::multigram::{
    em_train, prune_model, tokenize_corpus, EmConfig, MultigramLexicon, MultigramModel,
};

#[derive(Parser)]
#[command(
    name = "sublex",
    version,
    about = "Sub-lexical unit recognition pipeline: unit learning, language \
             modeling, search-graph compilation, lattice decoding, evaluation"
)]
struct Cli {
    /// Worker threads for data-parallel stages (EM, synthesis, decoding).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize corpora and derive the shared character inventory.
    Prepare {
        /// Input corpus as LANG=PATH (repeatable).
        #[arg(long = "corpus", value_name = "LANG=PATH", required = true)]
        corpora: Vec<String>,
        /// Output directory for normalized text and charset.tsv.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Learn a multigram unit inventory from a corpus with EM.
    TrainMultigrams {
        #[arg(long)]
        corpus: PathBuf,
        /// Maximum unit length in characters.
        #[arg(long)]
        dmax: usize,
        /// Language tag written into the model header (default: corpus
        /// file stem).
        #[arg(long)]
        lang: Option<String>,
        #[arg(long, default_value_t = 50)]
        max_iters: usize,
        /// Relative log-likelihood improvement threshold for stopping.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Drop multi-character units below this probability after
        /// training (0 disables pruning).
        #[arg(long, default_value_t = 0.0)]
        prune: f64,
        /// Output model TSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment a corpus into unit tokens with a trained model.
    Tokenize {
        #[arg(long)]
        corpus: PathBuf,
        /// Model TSV from train-multigrams.
        #[arg(long)]
        model: PathBuf,
        /// Output token file (one space-joined token line per corpus line).
        #[arg(long)]
        out: PathBuf,
        /// Also write the lexicon of units actually used.
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Estimate a smoothed backoff n-gram model over token files.
    TrainLm {
        /// Token file (repeatable; files are pooled).
        #[arg(long = "tokens", required = true)]
        tokens: Vec<PathBuf>,
        #[arg(long, default_value_t = 3)]
        order: usize,
        /// Output model in ARPA format.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compile the unified search graph from an LM, a lexicon, and a charset.
    BuildGraph {
        /// ARPA model from train-lm.
        #[arg(long)]
        lm: PathBuf,
        /// Lexicon TSV (unit per line) from tokenize --lexicon.
        #[arg(long)]
        lexicon: PathBuf,
        /// Charset TSV from prepare.
        #[arg(long)]
        charset: PathBuf,
        /// Output graph directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthesize frame-posterior lattices for a corpus.
    Synth {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        charset: PathBuf,
        /// Output directory (lattices, labels.txt, manifest.tsv).
        #[arg(long)]
        out_dir: PathBuf,
        /// Confusion mass in [0, 1).
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 3)]
        frames_per_char: usize,
        #[arg(long, default_value_t = 0.7)]
        blank_bias: f64,
        /// Base seed; line i uses seed + i.
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
    /// Decode manifest lattices against a graph.
    Decode {
        /// Graph directory from build-graph.
        #[arg(long)]
        graph: PathBuf,
        /// Manifest TSV from synth.
        #[arg(long)]
        manifest: PathBuf,
        /// Language-model scale.
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        /// Word-insertion mass.
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Beam margin in negated-log units ("inf" disables pruning).
        #[arg(long, default_value_t = 12.0)]
        beam: f64,
        #[arg(long, default_value_t = 1)]
        n_best: usize,
        /// Output TSV: file, rank, total, acoustic, lm, text.
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid-search gamma and beta on a development manifest.
    Tune {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated gamma grid.
        #[arg(long, default_value = "0.5,0.8,1.0,1.5,2.0")]
        gammas: String,
        /// Comma-separated beta grid.
        #[arg(long, default_value = "0.5,1.0,2.0,4.0")]
        betas: String,
        #[arg(long, default_value_t = 12.0)]
        beam: f64,
    },
    /// Decode a test manifest and report WER/CER/OOV/coverage.
    Evaluate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 12.0)]
        beam: f64,
        /// Score the greedy frame-collapse reading instead of decoding.
        #[arg(long)]
        greedy: bool,
    },
    /// Print size statistics of a compiled graph directory.
    Stats {
        /// Graph directory.
        dir: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Prepare { .. } => "prepare",
            Command::TrainMultigrams { .. } => "train-multigrams",
            Command::Tokenize { .. } => "tokenize",
            Command::TrainLm { .. } => "train-lm",
            Command::BuildGraph { .. } => "build-graph",
            Command::Synth { .. } => "synth",
            Command::Decode { .. } => "decode",
            Command::Tune { .. } => "tune",
            Command::Evaluate { .. } => "evaluate",
            Command::Stats { .. } => "stats",
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stage = cli.command.name();
    if let Err(e) = run(cli) {
        eprintln!("error ({stage}): {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .context("initializing the worker pool")?;
    }
    match cli.command {
        Command::Prepare { corpora, out_dir } => prepare(&corpora, &out_dir),
        Command::TrainMultigrams {
            corpus,
            dmax,
            lang,
            max_iters,
            tol,
            prune,
            out,
        } => train_multigrams(&corpus, dmax, lang.as_deref(), max_iters, tol, prune, &out),
        Command::Tokenize {
            corpus,
            model,
            out,
            lexicon,
        } => tokenize(&corpus, &model, &out, lexicon.as_deref()),
        Command::TrainLm { tokens, order, out } => train_lm(&tokens, order, &out),
        Command::BuildGraph {
            lm,
            lexicon,
            charset,
            out,
        } => build_graph(&lm, &lexicon, &charset, &out),
        Command::Synth {
            corpus,
            charset,
            out_dir,
            noise,
            frames_per_char,
            blank_bias,
            seed,
        } => synth(
            &corpus,
            &charset,
            &out_dir,
            noise,
            frames_per_char,
            blank_bias,
            seed,
        ),
        Command::Decode {
            graph,
            manifest,
            gamma,
            beta,
            beam,
            n_best,
            out,
        } => decode(&graph, &manifest, gamma, beta, beam, n_best, &out),
        Command::Tune {
            graph,
            manifest,
            gammas,
            betas,
            beam,
        } => tune(&graph, &manifest, &gammas, &betas, beam),
        Command::Evaluate {
            graph,
            manifest,
            gamma,
            beta,
            beam,
            greedy,
        } => evaluate(&graph, &manifest, gamma, beta, beam, greedy),
        Command::Stats { dir } => stats(&dir),
    }
}

fn prepare(corpora: &[String], out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut inventory: Option<CharacterInventory> = None;
    for spec in corpora {
        let (lang, path) = spec
            .split_once('=')
            .with_context(|| format!("--corpus {spec:?}: expected LANG=PATH"))?;
        let lines = load_corpus(Path::new(path), lang)?;
        if lines.is_empty() {
            bail!("{path}: no usable lines");
        }
        let inv = build_character_inventory(&lines)?;
        inventory = Some(match inventory {
            None => inv,
            Some(prev) => sublex::corpus::unify_inventories(&prev, &inv),
        });
        let text: String = lines.iter().map(|l| format!("{}\n", l.text)).collect();
        let out = out_dir.join(format!("{lang}.txt"));
        fs::write(&out, text).with_context(|| format!("writing {}", out.display()))?;
        let vocab: BTreeSet<String> = lines.iter().flat_map(|l| split_words(&l.text)).collect();
        println!(
            "{lang}: {} lines, {} distinct words -> {}",
            lines.len(),
            vocab.len(),
            out.display()
        );
    }
    let inventory = inventory.expect("at least one corpus is required");
    let charset = out_dir.join("charset.tsv");
    inventory.write_charset(&charset)?;
    println!(
        "charset: {} characters -> {}",
        inventory.len(),
        charset.display()
    );
    Ok(())
}

fn train_multigrams(
    corpus: &Path,
    dmax: usize,
    lang: Option<&str>,
    max_iters: usize,
    tol: f64,
    prune: f64,
    out: &Path,
) -> Result<()> {
    let tag = lang
        .map(str::to_string)
        .or_else(|| corpus.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "und".to_string());
    let lines = load_corpus(corpus, &tag)?;
    let words: Vec<String> = lines.iter().flat_map(|l| split_words(&l.text)).collect();
    let config = EmConfig {
        d_max: dmax,
        max_iters,
        rel_tol: tol,
        language_tag: tag,
    };
    let outcome = em_train(&words, &config)?;
    let final_ll = outcome.log_likelihood.last().copied().unwrap_or(f64::NAN);
    let model = if prune > 0.0 {
        prune_model(&outcome.model, prune)
    } else {
        outcome.model
    };
    model.write_tsv(out)?;
    println!(
        "trained d_max={dmax} on {} running words: {} units after {} iterations \
         (log-likelihood {final_ll:.3}) -> {}",
        words.len(),
        model.len(),
        outcome.log_likelihood.len(),
        out.display()
    );
    Ok(())
}

fn tokenize(corpus: &Path, model: &Path, out: &Path, lexicon: Option<&Path>) -> Result<()> {
    let model = MultigramModel::read_tsv(model)?;
    let lines = load_corpus(corpus, model.language_tag())?;
    let sequences = tokenize_corpus(&lines, &model);
    let text: String = sequences
        .iter()
        .map(|seq| format!("{}\n", seq.join(" ")))
        .collect();
    fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    println!("tokenized {} lines -> {}", sequences.len(), out.display());
    if let Some(lex_path) = lexicon {
        let lexicon = MultigramLexicon::from_tokenized(&sequences, model.language_tag());
        lexicon.write_tsv(lex_path)?;
        println!("lexicon: {} units -> {}", lexicon.len(), lex_path.display());
    }
    Ok(())
}

fn read_token_file(path: &Path) -> Result<Vec<Vec<String>>> {
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(raw
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect())
}

fn train_lm(token_files: &[PathBuf], order: usize, out: &Path) -> Result<()> {
    let mut sequences = Vec::new();
    for path in token_files {
        sequences.extend(read_token_file(path)?);
    }
    let counts = count_ngrams(&sequences, order, false)?;
    let model = estimate_kneser_ney(&counts)?;
    model.write_arpa(out)?;
    let grams: Vec<String> = (1..=order)
        .map(|k| format!("{}={}", k, model.num_grams(k)))
        .collect();
    println!(
        "estimated order-{order} model over {} sequences ({}) -> {}",
        sequences.len(),
        grams.join(" "),
        out.display()
    );
    Ok(())
}

fn build_graph(lm: &Path, lexicon: &Path, charset: &Path, out: &Path) -> Result<()> {
    let model = NgramModel::read_arpa(lm)?;
    let lexicon = MultigramLexicon::read_tsv(lexicon)?;
    let inventory = CharacterInventory::read_charset(charset)?;
    let entries = unit_lexicon_entries(lexicon.iter().map(str::to_string));
    let graph = build_search_graph(&model, entries, &inventory)?;
    write_graph_dir(&graph, out)?;
    let stats = graph_stats(&graph.fst);
    println!(
        "graph: {} states, {} arcs -> {}",
        stats.states,
        stats.arcs,
        out.display()
    );
    Ok(())
}

fn synth(
    corpus: &Path,
    charset: &Path,
    out_dir: &Path,
    noise: f64,
    frames_per_char: usize,
    blank_bias: f64,
    seed: u64,
) -> Result<()> {
    let inventory = CharacterInventory::read_charset(charset)?;
    let labels = frame_table(&inventory);
    let lines = load_corpus(corpus, "")?;
    if lines.is_empty() {
        bail!("{}: no usable lines", corpus.display());
    }
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    labels.write(&out_dir.join("labels.txt"))?;
    let mut entries = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        let spec = NoiseSpec {
            confusion_mass: noise,
            frames_per_char,
            blank_bias,
            seed: seed + i as u64,
        };
        let lat = synthesize_lattice(&line.text, &labels, &spec)?;
        let name = format!("{i:06}.lat");
        write_lattice(&lat, &out_dir.join(&name))?;
        entries.push(ManifestEntry {
            lattice: PathBuf::from(name),
            reference: line.text.clone(),
        });
    }
    write_manifest(&entries, &out_dir.join("manifest.tsv"))?;
    println!(
        "synthesized {} lattices (noise={noise}, frames/char={frames_per_char}, \
         seed={seed}) -> {}",
        entries.len(),
        out_dir.display()
    );
    Ok(())
}

fn load_set(
    manifest: &Path,
    labels: &sublex::fst::SymbolTable,
) -> Result<Vec<(PosteriorLattice, String)>> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    let entries = read_manifest(manifest)?;
    entries
        .iter()
        .map(|e| {
            let lat = read_lattice(&base.join(&e.lattice), labels)?;
            Ok((lat, e.reference.clone()))
        })
        .collect()
}

fn decode(
    graph_dir: &Path,
    manifest: &Path,
    gamma: f64,
    beta: f64,
    beam: f64,
    n_best: usize,
    out: &Path,
) -> Result<()> {
    let graph = read_graph_dir(graph_dir)?;
    let set = load_set(manifest, graph.fst.input_symbols())?;
    let entries = read_manifest(manifest)?;
    let cfg = DecodeConfig {
        gamma,
        beta,
        beam,
        n_best,
    };
    let mut rows = String::new();
    for ((lat, _), entry) in set.iter().zip(&entries) {
        let hyps = decode_lattice(lat, &graph, &cfg)?;
        for (rank, h) in hyps.iter().enumerate() {
            rows.push_str(&format!(
                "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\n",
                entry.lattice.display(),
                rank + 1,
                h.total,
                h.acoustic,
                h.lm,
                h.text
            ));
        }
    }
    fs::write(out, rows).with_context(|| format!("writing {}", out.display()))?;
    println!("decoded {} lattices -> {}", set.len(), out.display());
    Ok(())
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .with_context(|| format!("bad grid value {f:?}"))
        })
        .collect()
}

fn tune(graph_dir: &Path, manifest: &Path, gammas: &str, betas: &str, beam: f64) -> Result<()> {
    let graph = read_graph_dir(graph_dir)?;
    let set = load_set(manifest, graph.fst.input_symbols())?;
    let gammas = parse_grid(gammas)?;
    let betas = parse_grid(betas)?;
    let best = tune_hyperparameters(&graph, &set, &gammas, &betas, beam)?;
    println!(
        "best gamma={} beta={} (dev WER {:.2}%)",
        best.gamma, best.beta, best.wer
    );
    Ok(())
}

fn evaluate(
    graph_dir: &Path,
    manifest: &Path,
    gamma: f64,
    beta: f64,
    beam: f64,
    greedy: bool,
) -> Result<()> {
    let graph = read_graph_dir(graph_dir)?;
    let set = load_set(manifest, graph.fst.input_symbols())?;
    if greedy {
        let refs: Vec<&str> = set.iter().map(|(_, r)| r.as_str()).collect();
        let hyps: Vec<String> = set.iter().map(|(lat, _)| greedy_collapse(lat)).collect();
        let hyp_refs: Vec<&str> = hyps.iter().map(String::as_str).collect();
        let wer = word_error_rate(&refs, &hyp_refs)?;
        let cer = sublex::eval::char_error_rate(&refs, &hyp_refs)?;
        println!("greedy frame collapse on {} lines", set.len());
        println!("WER {wer:.2}%  CER {cer:.2}%");
        return Ok(());
    }
    let cfg = DecodeConfig {
        gamma,
        beta,
        beam,
        n_best: 1,
    };
    let report = evaluate_set(&graph, &set, &cfg)?;
    println!(
        "decoded {} lines ({} failed) in {}",
        report.lines,
        report.failed,
        format_mmss(report.wall_ms)
    );
    println!("WER {:.2}%  CER {:.2}%", report.wer, report.cer);
    println!(
        "lexicon OOV {:.2}%  coverage {:.2}%",
        report.oov_rate, report.coverage
    );
    Ok(())
}

fn stats(dir: &Path) -> Result<()> {
    let graph = read_graph_dir(dir)?;
    let s = graph_stats(&graph.fst);
    println!(
        "{}\tstates={}\tarcs={}\ttext_bytes={}",
        dir.display(),
        s.states,
        s.arcs,
        s.text_bytes
    );
    for (k, v) in &graph.meta {
        println!("  {k}={v}");
    }
    Ok(())
}
