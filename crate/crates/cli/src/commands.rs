use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lasr::dataset::{
    ingest as ingest_events, read_events, read_feature_queries, read_pairs, write_pairs, FeatureTable,
    IngestOptions, SplitRule, ValidationSize,
};
use lasr::evaluation::{evaluate_with_skipped, DEFAULT_KS};
use lasr::persist::{load_model, save_model};
use lasr::synthetic::{bench_train_config, run_benchmark, SyntheticConfig};
use lasr::trainer::train_with_progress;
use lasr::{
    infer, InferenceConfig, LossKind, ModelF32, PairSet, PositionWeights, Query, TrainConfig, Vocab,
    WeightScheme,
};
use serde_json::json;

use crate::settings::{KList, Resolver};
use crate::{BenchArgs, CliError, EvalArgs, InferArgs, IngestArgs, PredictArgs, TrainArgs};

const TRAIN_FILE: &str = "train.tsv";
const VALID_FILE: &str = "valid.tsv";
const TEST_FILE: &str = "test.tsv";
const QUERY_VOCAB_FILE: &str = "queries.vocab.tsv";
const ITEM_VOCAB_FILE: &str = "items.vocab.tsv";
const STATS_FILE: &str = "stats.txt";

fn sidecar(model: &Path, suffix: &str) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn parse_scheme(s: &str) -> Result<WeightScheme, CliError> {
    match s {
        "sparse" => Ok(WeightScheme::SparseHarmonic),
        "dense" => Ok(WeightScheme::DenseHarmonic),
        other => Err(CliError::Usage(format!("unknown weight scheme `{other}` (expected sparse or dense)"))),
    }
}

pub fn ingest(a: &IngestArgs, res: &mut Resolver, json: bool) -> Result<(), CliError> {
    let modulus = res.get("test-day-modulus", a.test_day_modulus, 5)?;
    let count = res.get_opt("valid-count", a.valid_count)?;
    let fraction = res.get("valid-fraction", a.valid_fraction, 0.1)?;
    let opts = IngestOptions {
        rule: SplitRule::new(modulus)?,
        validation: count.map_or(ValidationSize::Fraction(fraction), ValidationSize::Count),
        seed: res.get("seed", a.seed, 0)?,
        drop_self_pairs: res.get("drop-self-pairs", a.drop_self_pairs, false)?,
    };
    res.echo();

    // Everything is computed before the first write so a failure leaves no
    // partial output behind.
    let events = read_events(&a.events)?;
    if events.is_empty() {
        return Err(CliError::Data(format!("{}: no events", a.events.display())));
    }
    let data = ingest_events(&events, &opts)?;
    let stats = [
        ("events", events.len()),
        ("train_events", data.train_events),
        ("test_events", data.test_events),
        ("train_pairs", data.train.len()),
        ("valid_pairs", data.valid.len()),
        ("test_pairs", data.test.len()),
        ("queries", data.queries.len()),
        ("items", data.items.len()),
    ];
    let stats_text: String = stats.iter().map(|(k, v)| format!("{k}={v}\n")).collect();

    fs::create_dir_all(&a.out).map_err(|e| io_error(&a.out, e))?;
    write_pairs(a.out.join(TRAIN_FILE), &data.train)?;
    write_pairs(a.out.join(VALID_FILE), &data.valid)?;
    write_pairs(a.out.join(TEST_FILE), &data.test)?;
    data.queries.write_tsv(a.out.join(QUERY_VOCAB_FILE))?;
    data.items.write_tsv(a.out.join(ITEM_VOCAB_FILE))?;
    let stats_path = a.out.join(STATS_FILE);
    fs::write(&stats_path, &stats_text).map_err(|e| io_error(&stats_path, e))?;

    if json {
        let map: serde_json::Map<String, serde_json::Value> =
            stats.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
        println!("{}", serde_json::Value::Object(map));
    } else {
        print!("{stats_text}");
    }
    Ok(())
}

fn train_config(a: &TrainArgs, res: &mut Resolver) -> Result<TrainConfig, CliError> {
    let d = TrainConfig::default();
    let h = &a.hyper;
    let mut cfg = TrainConfig {
        stages: res.get("stages", h.stages, d.stages)?,
        k: res.get("k", h.k, d.k)?,
        dim: res.get("dim", h.dim, d.dim)?,
        weight_scheme: parse_scheme(&res.get("weights", h.weights.clone(), "sparse".to_string())?)?,
        eval_every: res.get("eval-every", h.eval_every, d.eval_every)?,
        patience: res.get("patience", h.patience, d.patience)?,
        max_updates: res.get("max-updates", h.max_updates, d.max_updates)?,
        freeze_context: res.get("freeze-context", h.freeze_context, d.freeze_context)?,
        warm_start: res.get("warm-start", h.warm_start, d.warm_start)?,
        ..d.clone()
    };
    cfg.hyper.loss = res.get("loss", h.loss, d.hyper.loss)?;
    cfg.hyper.learning_rate = res.get("lr", h.lr, d.hyper.learning_rate)?;
    cfg.hyper.max_norm = res.get("C", h.max_norm, d.hyper.max_norm)?;
    cfg.hyper.margin = res.get("margin", h.margin, d.hyper.margin)?;
    cfg.hyper.seed = res.get("seed", h.seed, d.hyper.seed)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Token pairs mapped through the query vocabulary or a feature table.
fn index_pairs(
    pairs: &[(String, String)],
    queries: &Vocab,
    items: &Vocab,
    features: Option<&FeatureTable>,
) -> Result<(PairSet, usize), CliError> {
    Ok(match features {
        Some(f) => PairSet::from_feature_tokens(pairs, f, items)?,
        None => PairSet::from_tokens(pairs, queries, items)?,
    })
}

pub fn train(a: &TrainArgs, res: &mut Resolver, json: bool) -> Result<(), CliError> {
    let cfg = train_config(a, res)?;
    res.echo();

    let queries = Vocab::read_tsv(a.data.join(QUERY_VOCAB_FILE))?;
    let items = Vocab::read_tsv(a.data.join(ITEM_VOCAB_FILE))?;
    let features = a.query_features.as_ref().map(read_feature_queries).transpose()?;
    let (train_set, train_skipped) =
        index_pairs(&read_pairs(a.data.join(TRAIN_FILE))?, &queries, &items, features.as_ref())?;
    let (valid_set, valid_skipped) =
        index_pairs(&read_pairs(a.data.join(VALID_FILE))?, &queries, &items, features.as_ref())?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(CliError::Data(format!(
            "{}: training and validation pairs must both be non-empty",
            a.data.display()
        )));
    }

    let mut log = String::new();
    for (k, v) in res.effective() {
        let _ = writeln!(log, "# {k}={v}");
    }
    let _ = writeln!(
        log,
        "# train_pairs={} valid_pairs={} skipped_train={train_skipped} skipped_valid={valid_skipped}",
        train_set.len(),
        valid_set.len()
    );
    let log_path = sidecar(&a.model, ".log");
    let outcome = train_with_progress::<f32>(&train_set, &valid_set, &cfg, &mut |r| {
        if json {
            println!(
                "{}",
                json!({"stage": r.stage, "updates": r.updates, "k": r.k, "valid_recall": r.valid_recall})
            );
        } else {
            println!("{r}");
        }
        let _ = writeln!(log, "{r}");
    });
    let (model, report) = match outcome {
        Ok(v) => v,
        Err(e) => {
            let _ = writeln!(log, "# aborted: {e}");
            fs::write(&log_path, &log).map_err(|e| io_error(&log_path, e))?;
            return Err(e.into());
        }
    };
    for (t, s) in report.stages.iter().enumerate() {
        let _ = writeln!(
            log,
            "# stage={t} best_valid_recall={:.6} updates={} gradient_steps={}",
            s.best_recall, s.updates, s.gradient_steps
        );
    }

    save_model(&model, &a.model)?;
    if features.is_none() {
        queries.write_tsv(sidecar(&a.model, ".queries.tsv"))?;
    }
    items.write_tsv(sidecar(&a.model, ".items.tsv"))?;
    fs::write(&log_path, &log).map_err(|e| io_error(&log_path, e))?;
    Ok(())
}

fn inference_config(a: &InferArgs, res: &mut Resolver) -> Result<InferenceConfig, CliError> {
    let d = InferenceConfig::default();
    let cfg = InferenceConfig {
        strategy: res.get("strategy", a.strategy, d.strategy)?,
        beam_width: res.get("beam-width", a.beam_width, d.beam_width)?,
        stages_to_run: res.get_opt("stages-to-run", a.stages_to_run)?,
    };
    if cfg.beam_width == 0 {
        return Err(CliError::Usage("--beam-width must be positive".into()));
    }
    Ok(cfg)
}

/// Model plus the vocabularies stored next to it, checked for agreement.
struct LoadedModel {
    model: ModelF32,
    queries: Vocab,
    items: Vocab,
    features: Option<FeatureTable>,
}

fn load_with_vocab(path: &Path, features: Option<&PathBuf>) -> Result<LoadedModel, CliError> {
    let model: ModelF32 = load_model(path)?;
    let items_path = sidecar(path, ".items.tsv");
    let items = Vocab::read_tsv(&items_path)?;
    if items.len() != model.items() {
        return Err(CliError::Data(format!(
            "vocabulary mismatch: model {} has {} items but {} lists {}",
            path.display(),
            model.items(),
            items_path.display(),
            items.len()
        )));
    }
    let (queries, features) = match features {
        Some(fp) => {
            let table = read_feature_queries(fp)?;
            if table.dim() != model.query_dim() {
                return Err(CliError::Data(format!(
                    "vocabulary mismatch: model {} expects {}-dimensional queries but {} has {}",
                    path.display(),
                    model.query_dim(),
                    fp.display(),
                    table.dim()
                )));
            }
            (Vocab::default(), Some(table))
        }
        None => {
            let qpath = sidecar(path, ".queries.tsv");
            let queries = Vocab::read_tsv(&qpath)?;
            if queries.len() != model.query_dim() {
                return Err(CliError::Data(format!(
                    "vocabulary mismatch: model {} has {} queries but {} lists {}",
                    path.display(),
                    model.query_dim(),
                    qpath.display(),
                    queries.len()
                )));
            }
            (queries, None)
        }
    };
    Ok(LoadedModel {
        model,
        queries,
        items,
        features,
    })
}

pub fn eval(a: &EvalArgs, res: &mut Resolver, json: bool) -> Result<(), CliError> {
    let inf = inference_config(&a.infer, res)?;
    let ks = res.get("ks", a.ks.clone(), KList(DEFAULT_KS.to_vec()))?;
    res.echo();

    let lm = load_with_vocab(&a.model, a.query_features.as_ref())?;
    let pairs = read_pairs(&a.pairs)?;
    let (set, skipped) = index_pairs(&pairs, &lm.queries, &lm.items, lm.features.as_ref())?;
    if set.is_empty() {
        return Err(CliError::Data(format!(
            "vocabulary mismatch: none of the {} pairs in {} are in the vocabulary of model {}",
            pairs.len(),
            a.pairs.display(),
            a.model.display()
        )));
    }
    let report = evaluate_with_skipped(&lm.model, &set, &ks.0, &inf, skipped)?;
    if json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_kv());
    }
    Ok(())
}

pub fn predict(a: &PredictArgs, res: &mut Resolver, json: bool) -> Result<(), CliError> {
    let inf = inference_config(&a.infer, res)?;
    let requested_k = res.get_opt("k", a.k)?;
    res.echo();

    let lm = load_with_vocab(&a.model, a.query_features.as_ref())?;
    let k = requested_k.unwrap_or(lm.model.k());
    if k == 0 {
        return Err(CliError::Usage("k must be positive".into()));
    }
    if k > lm.model.items() {
        return Err(CliError::Usage(format!(
            "k = {k} exceeds the item vocabulary size ({})",
            lm.model.items()
        )));
    }
    let model = if k == lm.model.k() {
        lm.model.clone()
    } else {
        let w = PositionWeights::new(k, lm.model.weights().scheme())?;
        ModelF32::new(lm.model.stages().to_vec(), w)?
    };

    let tokens: Vec<String> = match (&a.query, &a.queries) {
        (Some(q), _) => vec![q.clone()],
        (None, Some(path)) => fs::read_to_string(path)
            .map_err(|e| io_error(path, e))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect(),
        (None, None) => return Err(CliError::Usage("one of --query or --queries is required".into())),
    };
    // Resolve every token first so an unknown one prints nothing.
    let queries: Vec<Query> = tokens
        .iter()
        .map(|t| {
            let q = match &lm.features {
                Some(f) => f.get(t).cloned(),
                None => lm.queries.get(t).map(Query::one_hot),
            };
            q.ok_or_else(|| CliError::Data(format!("unknown query token `{t}` (exact match only)")))
        })
        .collect::<Result<_, _>>()?;

    let multi = a.queries.is_some();
    for (token, q) in tokens.iter().zip(&queries) {
        let list = infer(&model, q, &inf)?;
        for (pos, (&d, &score)) in list.items.iter().zip(&list.scores).enumerate() {
            let item = lm.items.token(d).expect("item index within vocabulary");
            if json {
                println!("{}", json!({"query": token, "rank": pos + 1, "item": item, "score": score}));
            } else if multi {
                println!("{token}\t{}\t{item}\t{score:.6}", pos + 1);
            } else {
                println!("{}\t{item}\t{score:.6}", pos + 1);
            }
        }
    }
    Ok(())
}

pub fn bench(a: &BenchArgs, res: &mut Resolver, json: bool) -> Result<(), CliError> {
    let seeds = res.get("seeds", a.seeds, 10)?;
    let start = res.get("seed", a.seed, 0)?;
    let d = SyntheticConfig::default();
    let data = SyntheticConfig {
        queries: res.get("queries", a.queries, d.queries)?,
        items: res.get("items", a.items, d.items)?,
        clusters: res.get("clusters", a.clusters, d.clusters)?,
        ..d
    };
    let compare_auc = res.get("compare-auc", a.compare_auc, true)?;
    let base = bench_train_config(LossKind::Warp, start);
    let overrides = |res: &mut Resolver, mut cfg: TrainConfig, lr_key: bool| -> Result<TrainConfig, CliError> {
        cfg.stages = res.get("stages", a.stages, base.stages)?;
        cfg.dim = res.get("dim", a.dim, base.dim)?;
        cfg.k = res.get("k", a.k, base.k)?;
        cfg.eval_every = res.get("eval-every", a.eval_every, base.eval_every)?;
        cfg.max_updates = res.get("max-updates", a.max_updates, base.max_updates)?;
        if lr_key {
            cfg.hyper.learning_rate = res.get("lr", a.lr, base.hyper.learning_rate)?;
        }
        Ok(cfg)
    };
    let warp_cfg = overrides(res, base.clone(), true)?;
    let mut auc_cfg = bench_train_config(LossKind::Auc, start);
    auc_cfg.dim = warp_cfg.dim;
    auc_cfg.k = warp_cfg.k;
    auc_cfg.eval_every = warp_cfg.eval_every;
    auc_cfg.max_updates = warp_cfg.max_updates;
    auc_cfg.stages = 0;
    res.echo();

    let (mut wins, mut auc_wins) = (0, 0);
    let (mut sum_t0, mut sum_t1, mut sum_auc) = (0.0, 0.0, 0.0);
    for seed in start..start + seeds {
        let o = run_benchmark(&data, &warp_cfg, seed)?;
        let auc = if compare_auc {
            Some(run_benchmark(&data, &auc_cfg, seed)?.recall_t0)
        } else {
            None
        };
        wins += usize::from(o.recall_t1 >= o.recall_t0);
        sum_t0 += o.recall_t0;
        sum_t1 += o.recall_t1;
        if let Some(r) = auc {
            sum_auc += r;
            auc_wins += usize::from(o.recall_t0 >= r);
        }
        if json {
            println!(
                "{}",
                json!({"seed": seed, "recall_t0": o.recall_t0, "recall_t1": o.recall_t1,
                       "improvement": o.improvement(), "auc_recall_t0": auc})
            );
        } else {
            let mut line = format!(
                "seed={seed} recall_t0={:.6} recall_t1={:.6} improvement={:+.6}",
                o.recall_t0,
                o.recall_t1,
                o.improvement()
            );
            if let Some(r) = auc {
                let _ = write!(line, " auc_recall_t0={r:.6}");
            }
            println!("{line}");
        }
    }
    let n = seeds.max(1) as f64;
    let mut summary = vec![
        ("seeds", json!(seeds)),
        ("k", json!(warp_cfg.k)),
        ("t1_not_worse", json!(wins)),
        ("mean_recall_t0", json!(sum_t0 / n)),
        ("mean_recall_t1", json!(sum_t1 / n)),
        ("mean_improvement", json!((sum_t1 - sum_t0) / n)),
    ];
    if compare_auc {
        summary.push(("mean_auc_recall_t0", json!(sum_auc / n)));
        summary.push(("warp_not_worse_than_auc", json!(auc_wins)));
    }
    if json {
        let map: serde_json::Map<String, serde_json::Value> =
            summary.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        println!("{}", serde_json::Value::Object(map));
    } else {
        let parts: Vec<String> = summary.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("summary {}", parts.join(" "));
    }
    Ok(())
}
