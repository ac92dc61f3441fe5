use std::fs::{self, File};
use std::io::Write;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use panelscope_core::agreement::{build_confusion, cohen_kappa, pairwise_agreement, render_pairwise_table};
use panelscope_core::clustering::{
    book_groups, book_vectors, elbow, intersect, kmeans, projection_csv, ElbowConfig, KMeansConfig,
};
use panelscope_core::corpus::{consensus_labels, labels_by, load_annotations, load_corpus, save_annotations, save_corpus};
use panelscope_core::features::{load_features, save_features};
use panelscope_core::feedback::{
    pool_from, render_rounds_table, run_baseline, run_experiment, MlpLearner, OracleFeedback, ORACLE_ANNOTATOR,
};
use panelscope_core::seqmine::{mine, CountMode};
use panelscope_core::synthetic::{blob_dataset, sample_corpus, BlobConfig, SampleConfig};
use panelscope_core::{
    load_checkpoint, save_checkpoint, AnnotationRecord, ClusterModel, Corpus, FeedbackSource, Learner, LoopConfig,
    RoundReport, TrainConfig, TransitionLabel,
};
use panelscope_service::{AppState, SessionFeedback, SessionStore};

use crate::io::{print_json, read_json, read_labels, read_pairs, records_from, write_json, write_jsonl};
use crate::{
    AgreeArgs, Cli, ClusterArgs, Command, CorpusCmd, ElbowArgs, FeaturesCmd, IntersectArgs, LoopArgs, MineArgs,
    PredictArgs, ServeArgs, SynthCmd, TrainArgs,
};

pub const EVALUATION_FILE: &str = "evaluation.jsonl";
pub const FEATURES_FILE: &str = "features.txt";
pub const ORACLE_FILE: &str = "oracle.jsonl";

pub fn run(cli: Cli) -> Result<()> {
    let json = cli.json;
    match cli.command {
        Command::Corpus(CorpusCmd::Validate { dir }) => {
            let c = load_corpus(&dir)?;
            let bad: Vec<&AnnotationRecord> =
                c.annotations().iter().filter(|r| c.check_pair(&r.pair).is_err()).collect();
            for r in &bad {
                eprintln!("annotation for unknown pair {} by {}", r.pair, r.annotator_id);
            }
            if !bad.is_empty() {
                bail!("{} annotations reference pairs outside the corpus", bad.len());
            }
            println!(
                "ok: {} books, {} panels, {} pairs, {} annotations",
                c.books().len(),
                c.panels().len(),
                c.all_pairs().len(),
                c.annotations().len()
            );
            Ok(())
        }
        Command::Corpus(CorpusCmd::Stats { dir }) => corpus_stats(&dir, json),
        Command::Agree(a) => agree(a, json),
        Command::Features(FeaturesCmd::Check { file, corpus }) => features_check(&file, corpus.as_deref(), json),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Loop(a) => run_loop(a, json),
        Command::Cluster(a) => cluster(a, json),
        Command::Elbow(a) => elbow_cmd(a, json),
        Command::Intersect(a) => intersect_cmd(a, json),
        Command::Mine(a) => mine_cmd(a, json),
        Command::Serve(a) => serve(a),
        Command::Synth(s) => synth(s),
    }
}

fn corpus_stats(dir: &Path, json: bool) -> Result<()> {
    let stats = load_corpus(dir)?.stats();
    if json {
        return print_json(&stats);
    }
    println!(
        "books {}  pages {}  panels {}  pairs {}  annotated pairs {}  records {}",
        stats.books, stats.pages, stats.panels, stats.pairs, stats.annotated_pairs, stats.annotation_records
    );
    println!("annotators: {}", stats.annotators.join(", "));
    if let Some(d) = stats.distribution {
        println!("{:<6}{:>8}", "label", "share");
        for (l, p) in TransitionLabel::ALL.iter().zip(d) {
            println!("{:<6}{:>8.3}", l.code(), p);
        }
    }
    println!("{:<16}{:<22}{:>8}{:>10}", "book", "genre", "pairs", "labeled");
    for b in &stats.per_book {
        println!("{:<16}{:<22}{:>8}{:>10}", b.book_id, b.genre.as_str(), b.pairs, b.labeled_pairs);
    }
    Ok(())
}

fn agree(a: AgreeArgs, json: bool) -> Result<()> {
    let corpus = load_corpus(&a.dir)?;
    let mut records = corpus.annotations().to_vec();
    for f in &a.extra {
        records.extend(load_annotations(f)?);
    }
    if a.all_pairs {
        let rows = pairwise_agreement(&records);
        if rows.is_empty() {
            bail!("no two annotators share a labeled pair");
        }
        return if json { print_json(&rows) } else {
            print!("{}", render_pairwise_table(&rows));
            Ok(())
        };
    }
    let raters = match a.raters {
        Some(r) if r.len() == 2 => r,
        Some(r) => bail!("--raters takes exactly two annotator ids, got {}", r.len()),
        None => bail!("pass --raters a,b or --all-pairs"),
    };
    let by = |id: &str| -> Vec<AnnotationRecord> { records.iter().filter(|r| r.annotator_id == id).cloned().collect() };
    let m = build_confusion(&by(&raters[0]), &by(&raters[1]))?;
    let score = cohen_kappa(&m)?;
    if json {
        return print_json(&serde_json::json!({
            "rater_a": raters[0], "rater_b": raters[1], "confusion": m, "score": score,
        }));
    }
    println!("rows {}, columns {}", raters[0], raters[1]);
    print!("{}", m.render());
    println!(
        "kappa {:.4}  p_o {:.4}  p_e {:.4}  band {}",
        score.kappa, score.observed_agreement, score.expected_agreement, score.band
    );
    Ok(())
}

fn features_check(file: &Path, corpus: Option<&Path>, json: bool) -> Result<()> {
    let store = load_features(file)?;
    let mut missing = Vec::new();
    if let Some(dir) = corpus {
        let c = load_corpus(dir)?;
        for p in c.panels() {
            if store.get(&p.key()).is_none() {
                missing.push(p.key().to_string());
            }
        }
    }
    if json {
        print_json(&serde_json::json!({
            "dim": store.dim(), "panels": store.len(), "pair_dim": store.pair_dim(), "missing": missing,
        }))?;
    } else {
        println!("dim {}  panels {}  pair input {}", store.dim(), store.len(), store.pair_dim());
        for m in missing.iter().take(20) {
            println!("missing {m}");
        }
    }
    if !missing.is_empty() {
        bail!("{} corpus panels have no features", missing.len());
    }
    Ok(())
}

fn train_config(path: Option<&Path>, epochs: Option<usize>) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = match path {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(e) = epochs {
        cfg.epochs_per_round = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn ground_labels(corpus: &Corpus, annotator: Option<&str>) -> Result<panelscope_core::LabelMap> {
    let labels = match annotator {
        Some(a) => labels_by(corpus.annotations(), a),
        None => consensus_labels(corpus.annotations()),
    };
    if labels.is_empty() {
        bail!("the corpus has no usable annotations");
    }
    Ok(labels)
}

fn train(a: TrainArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let store = load_features(&a.features)?;
    let cfg = train_config(a.config.as_deref(), a.epochs)?;
    let labels = ground_labels(&corpus, a.annotator.as_deref())?;
    let data: Vec<_> = labels.into_iter().collect();
    let mut learner = MlpLearner::new(&store, cfg)?;
    let history = learner.fit(&data, 1)?;
    for e in &history.epochs {
        println!("epoch {:>3}  loss {:.4}  accuracy {:.4}", e.epoch, e.mean_loss, e.accuracy);
    }
    save_checkpoint(&learner.checkpoint(), &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let store = load_features(&a.features)?;
    let learner = MlpLearner::from_checkpoint(&store, load_checkpoint(&a.model)?)?;
    let pairs = read_pairs(&a.pairs)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for p in learner.predict(&pairs)? {
        serde_json::to_writer(&mut out, &p)?;
        writeln!(out)?;
    }
    Ok(())
}

/// Appends each report as it arrives so that progress survives an abort.
fn report_sink(path: &Path) -> Result<impl FnMut(&RoundReport) -> panelscope_core::Result<()>> {
    let mut file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(move |r: &RoundReport| {
        let line = serde_json::to_string(r).expect("reports serialize");
        writeln!(file, "{line}")
            .and_then(|_| file.flush())
            .map_err(|e| panelscope_core::Error::Feedback(format!("cannot write round report: {e}")))?;
        log::info!(
            "round {}: holdout {:.3}, {}/{} correct, pool {}",
            r.round_index,
            r.holdout_accuracy,
            r.feedback_correct_count,
            r.feedback_batch_size,
            r.pool_size_after
        );
        Ok(())
    })
}

fn run_loop(a: LoopArgs, json: bool) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let store = load_features(&a.features)?;
    let mut train = train_config(a.config.as_deref(), a.epochs)?;
    train.seed = a.seed;
    let cfg = LoopConfig {
        feedback_batch_size: a.batch,
        adopt_corrections: a.adopt_corrections,
        cold_start: a.cold_start,
        seed: a.seed,
        ..LoopConfig::default()
    };
    let ground = ground_labels(&corpus, a.ground_annotator.as_deref())?;
    let candidates = corpus.all_pairs();
    fs::create_dir_all(&a.out)?;
    let rounds_path = a.out.join("rounds.jsonl");

    let mut pool = pool_from(&ground, &candidates, cfg.holdout_fraction)?;
    let mut learner = MlpLearner::new(&store, train.clone())?;

    let mut runtime = None;
    let mut feedback: Box<dyn FeedbackSource> = if a.interactive {
        let log = a.log.clone().unwrap_or_else(|| a.out.join("sessions.jsonl"));
        let mut state = AppState::new(SessionStore::open(&log)?);
        state.corpus = Some(Arc::new(corpus.clone()));
        state.corpus_dir = Some(a.corpus.clone());
        state.rounds_path = Some(rounds_path.clone());
        let shared = state.store.clone();
        let rt = tokio::runtime::Runtime::new()?;
        let addr = SocketAddr::from(([127, 0, 0, 1], a.port));
        let listener = rt.block_on(tokio::net::TcpListener::bind(addr))?;
        eprintln!("annotation service on http://{}", listener.local_addr()?);
        rt.spawn(async move {
            if let Err(e) = panelscope_service::serve_on(listener, state).await {
                log::error!("annotation service stopped: {e}");
            }
        });
        runtime = Some(rt);
        Box::new(SessionFeedback::new(shared, a.annotator.clone()).with_poll_interval(Duration::from_millis(250)))
    } else {
        let path = a.oracle.as_ref().expect("clap requires --oracle");
        Box::new(OracleFeedback::from_records(&load_annotations(path)?))
    };

    let reports = run_experiment(&mut pool, &mut learner, feedback.as_mut(), &cfg, a.rounds, report_sink(&rounds_path)?);
    drop(runtime);
    let reports = match reports {
        Ok(r) => r,
        Err(e) => {
            // completed rounds are already in rounds.jsonl
            let done = pool.round_index();
            return Err(e).context(format!("stopped after {done} completed rounds"));
        }
    };
    save_checkpoint(&learner.checkpoint(), a.out.join("model.ckpt"))?;
    save_annotations(a.out.join("labeled_pool.jsonl"), &records_from(pool.labeled(), "loop"))?;

    let baseline = if a.baseline {
        let fixed = pool_from(&ground, &candidates, cfg.holdout_fraction)?;
        let mut base_learner = MlpLearner::new(&store, train)?;
        let r = run_baseline(&fixed, &mut base_learner, feedback.as_mut(), &cfg, a.rounds)?;
        write_jsonl(&a.out.join("baseline.jsonl"), &r)?;
        Some(r)
    } else {
        None
    };

    if json {
        return print_json(&serde_json::json!({ "rounds": reports, "baseline": baseline }));
    }
    println!("with feedback");
    print!("{}", render_rounds_table(&reports));
    if let Some(b) = baseline {
        println!("\nwithout feedback");
        print!("{}", render_rounds_table(&b));
    }
    Ok(())
}

fn cluster(a: ClusterArgs, json: bool) -> Result<()> {
    let labels = read_labels(&a.labels, a.annotator.as_deref())?;
    let vectors = book_vectors(&labels);
    let cfg = KMeansConfig { seed: a.seed, ..KMeansConfig::default() };
    let model = kmeans(&vectors, a.k, &cfg)?;
    if let Some(out) = &a.out {
        write_json(out, &model)?;
    }
    if let Some(csv) = &a.csv {
        fs::write(csv, projection_csv(&vectors, &model))?;
    }
    if json {
        return print_json(&model);
    }
    println!("k {}  books {}  inertia {:.6}", model.k, model.assignments.len(), model.inertia);
    print!("{:<8}", "cluster");
    for l in TransitionLabel::ALL {
        print!("{:>8}", l.code());
    }
    println!("{:>8}", "books");
    for (c, centroid) in model.centroids.iter().enumerate() {
        print!("{:<8}", format!("clus{}", c + 1));
        for v in centroid {
            print!("{v:>8.3}");
        }
        println!("{:>8}", model.assignments.values().filter(|&&x| x == c).count());
    }
    for (book, c) in &model.assignments {
        println!("{book}\tclus{}", c + 1);
    }
    Ok(())
}

fn elbow_cmd(a: ElbowArgs, json: bool) -> Result<()> {
    let labels = read_labels(&a.labels, a.annotator.as_deref())?;
    let points: Vec<Vec<f64>> = book_vectors(&labels).iter().map(|b| b.v.to_vec()).collect();
    let cfg = ElbowConfig {
        k_min: a.kmin,
        k_max: a.kmax.min(points.len()),
        threshold: a.threshold,
        kmeans: KMeansConfig { seed: a.seed, ..KMeansConfig::default() },
        ..ElbowConfig::default()
    };
    let report = elbow(&points, &cfg)?;
    if let Some(csv) = &a.csv {
        fs::write(csv, report.to_csv())?;
    }
    if json {
        return print_json(&report);
    }
    print!("{}", report.to_csv());
    println!("chosen k = {} (threshold {})", report.chosen_k, report.threshold);
    Ok(())
}

fn intersect_cmd(a: IntersectArgs, json: bool) -> Result<()> {
    let model: ClusterModel = read_json(&a.model)?;
    let corpus = load_corpus(&a.corpus)?;
    let table = intersect(&model, &book_groups(&corpus));
    if json {
        return print_json(&table);
    }
    print!("{}", table.render());
    Ok(())
}

fn mine_cmd(a: MineArgs, json: bool) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let labels = match &a.labels {
        Some(p) => read_labels(p, a.annotator.as_deref())?,
        None => ground_labels(&corpus, a.annotator.as_deref())?,
    };
    let mode = match a.max_gap {
        Some(max_gap) => CountMode::Gapped { max_gap },
        None => CountMode::Contiguous,
    };
    let report = mine(&corpus, &labels, &book_groups(&corpus), &a.lengths, a.topk, mode)?;
    if json {
        return print_json(&report);
    }
    print!("{}", report.render());
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let mut state = AppState::new(SessionStore::open(&a.log)?);
    state.corpus = Some(Arc::new(corpus));
    state.corpus_dir = Some(a.corpus.clone());
    state.rounds_path = a.rounds.clone();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(SocketAddr::new(a.host, a.port)).await?;
        // scripts wait for this line
        println!("listening on http://{}", listener.local_addr()?);
        std::io::stdout().flush()?;
        panelscope_service::serve_on(listener, state).await
    })?;
    Ok(())
}

fn synth(cmd: SynthCmd) -> Result<()> {
    match cmd {
        SynthCmd::Sample { out, seed } => {
            let s = sample_corpus(&SampleConfig { seed, ..SampleConfig::default() })?;
            save_corpus(&s.corpus, &out)?;
            save_features(&s.features, out.join(FEATURES_FILE))?;
            save_annotations(out.join(EVALUATION_FILE), &s.evaluation)?;
            println!(
                "wrote {}: {} pairs labeled, {} evaluation records",
                out.display(),
                s.corpus.annotations().len(),
                s.evaluation.len()
            );
        }
        SynthCmd::Blobs { out, labeled, unlabeled, seed } => {
            let d = blob_dataset(&BlobConfig { labeled, unlabeled, seed, ..BlobConfig::default() })?;
            let corpus = Corpus::new(
                d.corpus.books().to_vec(),
                d.corpus.panels().to_vec(),
                records_from(&d.ground, "gt"),
            )?;
            save_corpus(&corpus, &out)?;
            save_features(&d.features, out.join(FEATURES_FILE))?;
            save_annotations(out.join(ORACLE_FILE), &records_from(&d.truth, ORACLE_ANNOTATOR))?;
            println!("wrote {}: {} labeled, {} unlabeled pairs", out.display(), d.ground.len(), d.unlabeled.len());
        }
    }
    Ok(())
}
