//! Command-line verbs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use wordspot_core::augment::{augment_full_page, augment_in_place, synthetic_page};
use wordspot_core::embedder::EmbeddingLoss;
use wordspot_core::eval::{evaluate_qbe, evaluate_qbs, EvalConfig, QueryMode};
use wordspot_core::image::PixelRect;
use wordspot_core::GrayImage;

use crate::config::{EmbeddingChoice, ProjectConfig};
use crate::error::{Error, Result};
use crate::formats::{load_model, save_index, save_model};
use crate::io::{ground_truth, list_pages, save_png, write_json, Page, Sidecar};
use crate::pipeline::{assemble_index, load_labeled, open_index, relativize_paths, score_files, score_pages, search_example, search_text, train_model, tune_thresholds};
use crate::report::{build_report, to_csv, to_json};

#[derive(Debug, Parser)]
#[command(name = "wordspot", version, about = "Segmentation-free word search for handwritten pages")]
pub struct Cli {
    /// Project config JSON; falls back to $WORDSPOT_CONFIG, then defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AugmentMode {
    Inplace,
    Fullpage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossChoice {
    Cosine,
    Cosemb,
    Bce,
}

impl From<LossChoice> for EmbeddingLoss {
    fn from(l: LossChoice) -> Self {
        match l {
            LossChoice::Cosine => EmbeddingLoss::Cosine,
            LossChoice::Cosemb => EmbeddingLoss::CosineEmbedding,
            LossChoice::Bce => EmbeddingLoss::Bce,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeChoice {
    Qbs,
    Qbe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a config file with every default spelled out.
    Init {
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic glyph corpus: page images plus sidecars.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pages: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Augment a labeled corpus.
    Augment {
        #[arg(long, value_enum)]
        mode: AugmentMode,
        #[arg(long)]
        pages: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pages to generate in full-page mode.
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Augmented copies per page in in-place mode.
        #[arg(long, default_value_t = 1)]
        copies: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model on a labeled corpus.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum)]
        loss: Option<LossChoice>,
        #[arg(long, value_enum)]
        embedding: Option<EmbeddingChoice>,
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a search index over a directory of pages.
    Index {
        #[arg(long)]
        pages: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Query an index; prints one JSON hit per line.
    Search {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long, conflicts_with = "qbe", required_unless_present = "qbe")]
        query: Option<String>,
        /// Example region as `page:x,y,w,h`.
        #[arg(long)]
        qbe: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        /// Directory holding the page images, when they moved since indexing.
        #[arg(long)]
        pages_dir: Option<PathBuf>,
    },
    /// Evaluate an index against ground truth.
    Eval {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum, default_value = "qbs")]
        mode: ModeChoice,
        /// Comma-separated IoU relevance thresholds.
        #[arg(long, value_delimiter = ',')]
        overlap: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tune the score and NMS thresholds on validation pages and write them
    /// back to the config.
    Gridsearch {
        #[arg(long)]
        val: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Serve the HTTP API and the search console.
    Serve {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long)]
        pages_dir: Option<PathBuf>,
    },
}

fn required(arg: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    arg.or_else(|| fallback.clone()).ok_or_else(|| Error::Usage(format!("--{name} is required (or set paths.{name} in the config)")))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn page_name(i: usize, n: usize) -> String {
    let width = n.saturating_sub(1).to_string().len().max(3);
    format!("page_{i:0width$}")
}

fn write_page(dir: &Path, id: &str, img: &GrayImage, sidecar: &Sidecar) -> Result<()> {
    save_png(img, &dir.join(format!("{id}.png")))?;
    write_json(sidecar, &dir.join(format!("{id}.json")))
}

/// Parses `page:x,y,w,h`.
pub fn parse_qbe(s: &str) -> Result<(String, [i64; 4])> {
    let bad = || Error::Usage(format!("--qbe expects page:x,y,w,h, got {s:?}"));
    let (page, rest) = s.rsplit_once(':').ok_or_else(bad)?;
    let v: Vec<i64> = rest.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?;
    let b: [i64; 4] = v.try_into().map_err(|_| bad())?;
    if page.is_empty() {
        return Err(bad());
    }
    Ok((page.into(), b))
}

pub fn run(cli: Cli) -> Result<()> {
    let (mut cfg, cfg_path) = match cli.command {
        Command::Init { .. } => (ProjectConfig::default(), None),
        Command::Gridsearch { .. } => match ProjectConfig::locate(cli.config.as_deref()) {
            Some(p) if p.exists() => (ProjectConfig::load(&p)?, Some(p)),
            other => (ProjectConfig::default(), other),
        },
        _ => ProjectConfig::resolve(cli.config.as_deref())?,
    };
    match cli.command {
        Command::Init { out } => cfg.save(&out),
        Command::Synth { out, pages, seed } => {
            if let Some(n) = pages {
                cfg.synth.pages = n;
            }
            if let Some(s) = seed {
                cfg.synth.seed = s;
            }
            create_dir(&out)?;
            for i in 0..cfg.synth.pages {
                let (img, words) = synthetic_page(&cfg.synth, i)?;
                let id = page_name(i, cfg.synth.pages);
                write_page(&out, &id, &img, &Sidecar::from_boxes(&id, &words))?;
            }
            eprintln!("wrote {} pages to {}", cfg.synth.pages, out.display());
            Ok(())
        }
        Command::Augment { mode, pages, out, count, copies, seed } => {
            let mut aug = cfg.synth.augment.clone();
            if let Some(s) = seed {
                aug.seed = s;
            }
            let corpus = load_labeled(&list_pages(&pages)?)?;
            create_dir(&out)?;
            match mode {
                AugmentMode::Inplace => {
                    for (pi, page) in corpus.iter().enumerate() {
                        let boxes: Vec<_> = page.words.iter().map(|w| w.bbox).collect();
                        for c in 0..copies {
                            let a = wordspot_core::augment::AugmentConfig {
                                seed: aug.seed.wrapping_add((pi * copies + c) as u64),
                                ..aug.clone()
                            };
                            let img = augment_in_place(&page.image, &boxes, &a)?;
                            let id = format!("{}_aug{c}", page.file.id);
                            write_page(&out, &id, &img, &Sidecar::from_boxes(&id, &page.words))?;
                        }
                    }
                }
                AugmentMode::Fullpage => {
                    let bank = word_bank(&corpus);
                    for i in 0..count {
                        let a = wordspot_core::augment::AugmentConfig { seed: aug.seed.wrapping_add(i as u64), ..aug.clone() };
                        let (img, words) =
                            augment_full_page(&bank, cfg.synth.canvas_w, cfg.synth.canvas_h, cfg.synth.words_per_page, &a)?;
                        let id = page_name(i, count);
                        write_page(&out, &id, &img, &Sidecar::from_boxes(&id, &words))?;
                    }
                }
            }
            Ok(())
        }
        Command::Train { corpus, loss, embedding, iterations, seed, out } => {
            let corpus = required(corpus, &cfg.paths.corpus, "corpus")?;
            let out = required(out, &cfg.paths.model, "model")?;
            if let Some(l) = loss {
                cfg.train.loss = l.into();
            }
            if let Some(e) = embedding {
                cfg.embedding = e;
            }
            if let Some(n) = iterations {
                cfg.train.iterations = n;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            let pages = load_labeled(&list_pages(&corpus)?)?;
            let model = train_model(&pages, &cfg.embedding.embedder(), &cfg.train, &cfg.matching, &cfg.index, &mut |p| {
                match p.val_map {
                    Some(m) => eprintln!("iter {} lr {:e} loss {:.5} val_map {:.4}", p.iteration, p.lr, p.loss.total, m),
                    None => eprintln!("iter {} lr {:e} loss {:.5}", p.iteration, p.lr, p.loss.total),
                }
            })?;
            save_model(&model, &out)
        }
        Command::Index { pages, model, out } => {
            let model = load_model(&required(model, &cfg.paths.model, "model")?)?;
            let out = required(out, &cfg.paths.index, "index")?;
            let files = list_pages(&pages)?;
            let mut scored = Vec::new();
            for (id, r) in score_files(&files, &model, &cfg.index) {
                match r {
                    Ok(s) => scored.push(s),
                    Err(e) => eprintln!("{}", serde_json::json!({ "page": id, "error": e.kind(), "message": e.to_string() })),
                }
            }
            if scored.is_empty() && !files.is_empty() {
                return Err(Error::Usage("no page could be indexed".into()));
            }
            let mut index = assemble_index(&scored, &model, &cfg.index.query)?;
            relativize_paths(&mut index, &out);
            save_index(&index, &out)?;
            eprintln!("indexed {} pages, {} proposals", index.pages.len(), index.proposal_count());
            Ok(())
        }
        Command::Search { index, query, qbe, k, pages_dir } => {
            let index = open_index(&required(index, &cfg.paths.index, "index")?)?;
            let k = k.unwrap_or(index.query.k);
            let hits = match (query, qbe) {
                (Some(q), _) => search_text(&index, &q, k)?,
                (None, Some(spec)) => {
                    let (page, b) = parse_qbe(&spec)?;
                    search_example(&index, &page, b, k, pages_dir.as_deref())?
                }
                (None, None) => return Err(Error::Usage("give --query or --qbe".into())),
            };
            let mut text = String::new();
            for h in &hits {
                text.push_str(&serde_json::to_string(h).expect("hit serializes"));
                text.push('\n');
            }
            write_output(None, &text)
        }
        Command::Eval { index, gt, mode, overlap, format, out } => {
            let index = open_index(&required(index, &cfg.paths.index, "index")?)?;
            let mut ecfg = EvalConfig { mode: match mode { ModeChoice::Qbs => QueryMode::Qbs, ModeChoice::Qbe => QueryMode::Qbe }, ..cfg.eval.clone() };
            if let Some(o) = overlap {
                ecfg.overlaps = o;
            }
            let pages = load_labeled(&list_pages(&gt)?)?;
            let gts: Vec<_> = ground_truth(&pages).into_iter().filter(|g| index.page(&g.page_id).is_some()).collect();
            let report = match ecfg.mode {
                QueryMode::Qbs => evaluate_qbs(&index.pages, &gts, &index.model, &ecfg)?,
                QueryMode::Qbe => {
                    let imgs: Vec<(&str, &GrayImage)> = pages.iter().map(|p| (p.file.id.as_str(), &p.image)).collect();
                    evaluate_qbe(&index.pages, &imgs, &gts, &index.model, &ecfg)?
                }
            };
            let rep = build_report(&report, &index, &gts, &ecfg);
            let text = match format {
                ReportFormat::Json => to_json(&rep),
                ReportFormat::Csv => to_csv(&rep)?,
            };
            write_output(out.as_deref(), &text)
        }
        Command::Gridsearch { val, model } => {
            let path = cfg_path.ok_or_else(|| Error::Usage("gridsearch writes to a config: pass --config or set WORDSPOT_CONFIG".into()))?;
            let model = load_model(&required(model, &cfg.paths.model, "model")?)?;
            let pages = load_labeled(&list_pages(&val)?)?;
            let scored = score_pages(&pages, &model, &cfg.index)?;
            let best = tune_thresholds(&scored, &ground_truth(&pages), &model, &cfg.index.query, &cfg.eval)?;
            cfg.index.query.score_threshold = best.score_threshold;
            cfg.index.query.nms_overlap = best.nms_overlap;
            cfg.save(&path)?;
            write_output(None, &format!("{}\n", serde_json::to_string(&best).expect("grid result serializes")))
        }
        Command::Serve { index, addr, pages_dir } => {
            let index = open_index(&required(index, &cfg.paths.index, "index")?)?;
            crate::server::serve(index, pages_dir, &addr)
        }
    }
}

/// Ground-truth word crops of labeled pages.
pub fn word_bank(pages: &[Page]) -> Vec<(GrayImage, String)> {
    let mut bank = Vec::new();
    for p in pages {
        for w in &p.words {
            let r = PixelRect::enclosing(&w.bbox, p.image.width, p.image.height);
            if r.w > 0 && r.h > 0 {
                bank.push((p.image.crop(r), w.label.clone()));
            }
        }
    }
    bank
}

