use super::*;
use crate::domains::{build_dataset, BaselineStrategy, DatasetConfig, DatasetSplits, GeneratorConfig};

fn data() -> DatasetSplits {
    build_dataset(&DatasetConfig {
        generator: GeneratorConfig::new(DomainParams::minimal(DomainKind::Blocksworld), 0, 3),
        train: 24,
        valid: 4,
        test: 4,
        strategy: BaselineStrategy::default(),
        oracle_budget: Some(100_000),
    })
    .unwrap()
}

fn config() -> LoopConfig {
    let mut c = LoopConfig::new(DomainParams::minimal(DomainKind::Blocksworld), 5);
    c.model = ModelConfig {
        layers: 1,
        heads: 2,
        embed_dim: 16,
        ff_dim: 32,
        context_length: 64,
        dropout: 0.1,
        vocab_size: 0,
    };
    c.pretrain.epochs = 3;
    c.pretrain.warmup_steps = 5;
    c.finetune.epochs = 2;
    c.m = 6;
    c.n = 4;
    c.n_loop = 2;
    c.sampler.max_new_tokens = 30;
    c.workers = 2;
    c
}

#[test]
fn pretrain_is_deterministic() {
    let d = data();
    let (a, _) = pretrain(&config(), &d.train, &d.valid).unwrap();
    let (b, _) = pretrain(&config(), &d.train, &d.valid).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert!(matches!(
        pretrain(&config(), &[], &d.valid),
        Err(ImproveError::Policy(PolicyError::EmptyDataset))
    ));
}

#[test]
fn resumed_run_matches_uninterrupted() {
    let d = data();
    let cfg = config();
    let tmp = tempfile::tempdir().unwrap();
    let full = RunDir::new(tmp.path().join("full"));
    let part = RunDir::new(tmp.path().join("part"));
    full.init(&cfg, &d.train, &d.valid).unwrap();
    part.init(&cfg, &d.train, &d.valid).unwrap();
    let reports = full.improve(2, false).unwrap();
    assert_eq!(reports.len(), 2);

    part.improve(1, false).unwrap();
    assert!(part.improve(2, false).is_err());
    // a crashed second iteration leaves a partial directory behind
    std::fs::create_dir_all(part.iter_dir(2)).unwrap();
    std::fs::write(part.iter_dir(2).join("checkpoint"), b"junk").unwrap();
    part.improve(2, true).unwrap();

    for k in 0..=2 {
        let a = std::fs::read(full.checkpoint_path(k)).unwrap();
        let b = std::fs::read(part.checkpoint_path(k)).unwrap();
        assert!(a == b, "checkpoint {k} differs");
    }
    assert_eq!(
        std::fs::read(full.root().join("cache.jsonl")).unwrap(),
        std::fs::read(part.root().join("cache.jsonl")).unwrap()
    );

    // cache means never rise
    let pre = full.load_cache(0).unwrap();
    let mut prev = f64::INFINITY;
    for k in 0..=2 {
        let c = full.load_cache(k).unwrap();
        for e in pre.entries() {
            assert!(c.get(&e.id).unwrap().length <= e.length);
        }
        let m = c.mean_length().unwrap();
        assert!(m <= prev);
        prev = m;
    }
    for r in &reports {
        assert!(r.problems_harvested <= r.problems_sampled);
        assert!(r.sample_secs >= 0.0 && r.finetune_secs >= 0.0);
    }
}

#[test]
fn zero_iterations_keep_the_policy() {
    let d = data();
    let tmp = tempfile::tempdir().unwrap();
    let run = RunDir::new(tmp.path());
    run.init(&config(), &d.train, &d.valid).unwrap();
    let before = std::fs::read(run.checkpoint_path(0)).unwrap();
    assert!(run.improve(0, false).unwrap().is_empty());
    assert_eq!(run.last_completed(), Some(0));
    assert_eq!(std::fs::read(run.checkpoint_path(0)).unwrap(), before);
    assert!(run.init(&config(), &d.train, &d.valid).is_err());
}

#[test]
fn m_larger_than_training_set_is_rejected() {
    let d = data();
    let mut cfg = config();
    let (ckpt, _) = pretrain(&cfg, &d.train, &d.valid).unwrap();
    cfg.m = 1000;
    let train = resolve(&d.train).unwrap();
    let mut cache = seed_cache(&d.train);
    assert!(matches!(
        iterate(&cfg, 1, &ckpt, &train, &mut cache),
        Err(ImproveError::InvalidConfig(_))
    ));
}

#[test]
fn evaluation_bfs_never_longer_and_prefixes_nest() {
    let d = data();
    let (ckpt, _) = pretrain(&config(), &d.train, &d.valid).unwrap();
    let cfg = EvalConfig {
        ns: vec![2, 8],
        with_bfs: true,
        sampler: SamplerConfig {
            max_new_tokens: 30,
            ..SamplerConfig::new(1.0, 9)
        },
        workers: 1,
    };
    let recs = evaluate(&ckpt, &d.test, &cfg).unwrap();
    assert_eq!(recs.len(), d.test.len());
    for r in &recs {
        let (a, b) = (r.at(2).unwrap(), r.at(8).unwrap());
        assert!(a.valid <= b.valid);
        if let Some(l) = a.length {
            assert!(b.length.unwrap() <= l);
        }
        for x in [a, b] {
            assert_eq!(x.length.is_some(), x.bfs_length.is_some());
            if let (Some(l), Some(g)) = (x.length, x.bfs_length) {
                assert!(g <= l);
                assert!(g >= r.optimal_length.unwrap());
            }
        }
    }
    let again = evaluate(&ckpt, &d.test, &EvalConfig { workers: 3, ..cfg }).unwrap();
    let strip = |v: &[EvalRecord]| v.iter().map(|r| (r.id.clone(), r.by_n.clone())).collect::<Vec<_>>();
    assert_eq!(strip(&recs), strip(&again));
}
