use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use plangen_core::domains::{
    build_dataset, read_jsonl, write_jsonl, BaselineStrategy, DatasetConfig, DatasetRecord, DomainParams,
    ExternalPlanner, Split,
};
use plangen_core::improve::{check_disjoint, evaluate, EvalConfig, EvalRun, LoopConfig, RunDir};
use plangen_core::metrics::{
    aggregate, compare, methods_csv, report_run, rows_csv, rows_from_eval, stats_csv, McNemarMode, WilcoxonMode,
};
use plangen_core::pddl::{self, GroundedTask};
use plangen_core::world::validate_actions;
use plangen_core::{DomainKind, GeneratorConfig, ProblemSet};

#[derive(Parser)]
#[command(name = "plangen", version, about = "Transformer plan generation with self-improvement")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scale {
    Minimal,
    Full,
}

impl Scale {
    fn params(self, kind: DomainKind) -> DomainParams {
        match self {
            Scale::Minimal => DomainParams::minimal(kind),
            Scale::Full => DomainParams::full(kind),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Wilcoxon {
    Auto,
    Exact,
    Normal,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate train/valid/test splits with baseline plans.
    Generate {
        #[arg(long)]
        domain: Option<DomainKind>,
        #[arg(long, value_enum, default_value = "full")]
        scale: Scale,
        #[arg(long, default_value_t = 1000)]
        train: usize,
        #[arg(long, default_value_t = 100)]
        valid: usize,
        #[arg(long, default_value_t = 100)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Node budget of the BFS oracle on test problems (0 skips it).
        #[arg(long, default_value_t = 200_000)]
        oracle_budget: usize,
        /// External planner command with {domain}, {problem} and {plan-out}.
        #[arg(long)]
        planner: Option<String>,
        /// Full dataset configuration as JSON; overrides the other flags.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a default loop configuration.
    Config {
        #[arg(long)]
        domain: DomainKind,
        #[arg(long, value_enum, default_value = "full")]
        scale: Scale,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check plans against a problem and print a verdict per plan.
    Validate {
        /// Built-in domain name.
        #[arg(long, conflicts_with = "domain_file")]
        domain: Option<DomainKind>,
        #[arg(long)]
        domain_file: Option<PathBuf>,
        #[arg(long, requires = "plans")]
        problem: Option<PathBuf>,
        /// Plan files (one parenthesized action per line).
        plans: Vec<PathBuf>,
        /// Validate every plan stored in a dataset file instead.
        #[arg(long, conflicts_with = "problem")]
        dataset: Option<PathBuf>,
    },
    /// Create a run directory and train the initial policy.
    Pretrain {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: PathBuf,
        /// Loop configuration JSON (see `plangen config`).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run self-improvement iterations.
    Improve {
        #[arg(long)]
        run: PathBuf,
        /// Total number of iterations the run should have afterwards.
        #[arg(long)]
        iterations: Option<usize>,
        /// Continue after the last complete iteration.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint with best-of-N sampling.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Candidate counts; repeat for several.
        #[arg(long = "n", default_values_t = [8])]
        ns: Vec<usize>,
        /// Also report shortest plans through the candidate state graph.
        #[arg(long)]
        bfs: bool,
        /// Iteration to evaluate; defaults to the last complete one.
        #[arg(long)]
        iteration: Option<usize>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Write CSV tables for a run.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Paired significance tests between two evaluations.
    Stats {
        /// First evaluation file (eval/iter-<k>.json).
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value = "a")]
        label_a: String,
        #[arg(long, default_value = "b")]
        label_b: String,
        /// Methods to compare, e.g. --pair "a N=8" "b N=8"; repeatable.
        #[arg(long, num_args = 2, value_names = ["FIRST", "SECOND"], required = true)]
        pair: Vec<String>,
        #[arg(long, value_enum, default_value = "auto")]
        wilcoxon: Wilcoxon,
        /// Use the continuity-corrected chi-square McNemar test.
        #[arg(long)]
        chi2: bool,
        /// Bonferroni factor; defaults to the number of pairs.
        #[arg(long)]
        comparisons: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn records(path: &Path) -> Result<Vec<DatasetRecord>> {
    read_jsonl(path).with_context(|| format!("reading {}", path.display()))
}

fn problem_set(recs: &[DatasetRecord], split: Split) -> Result<Option<ProblemSet>> {
    let Some(first) = recs.first() else {
        return Ok(None);
    };
    let problems = recs.iter().map(|r| r.instance()).collect::<Result<Vec<_>, _>>()?;
    Ok(Some(ProblemSet {
        domain: first.domain_name,
        split,
        problems,
    }))
}

/// Returns false if the plan is not a solution.
fn report_plan(task: &GroundedTask, name: &str, steps: &[pddl::Atom]) -> bool {
    let mut ids = Vec::with_capacity(steps.len());
    for (t, a) in steps.iter().enumerate() {
        let args: Vec<&str> = a.args.iter().map(String::as_str).collect();
        match task.lookup_action(&a.predicate, &args) {
            Some(i) => ids.push(i),
            None => {
                println!("{name}: INVALID, step {} {a} is not a ground action of the task", t + 1);
                return false;
            }
        }
    }
    let c = validate_actions(task, &ids);
    if let Some(t) = c.failed_at {
        let act = &task.actions[ids[t] as usize];
        let unmet: Vec<String> = act
            .pre
            .iter()
            .filter(|&&p| !c.states[t].contains(p as usize))
            .map(|&p| task.atom_name(p))
            .collect();
        println!(
            "{name}: INVALID, step {} {} has unsatisfied preconditions {}",
            t + 1,
            task.action_name(ids[t]),
            unmet.join(" ")
        );
        false
    } else if !c.goal_reached {
        let last = c.states.last().expect("initial state");
        let unmet: Vec<String> = task.goal.ones().filter(|&g| !last.contains(g)).map(|g| task.atom_name(g as u32)).collect();
        println!("{name}: INVALID, goal not reached, missing {}", unmet.join(" "));
        false
    } else {
        println!("{name}: VALID, {} steps", ids.len());
        true
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Generate {
            domain,
            scale,
            train,
            valid,
            test,
            seed,
            oracle_budget,
            planner,
            config,
            out,
        } => {
            let cfg = match config {
                Some(p) => read_json::<DatasetConfig>(&p)?,
                None => {
                    let kind = domain.context("either --domain or --config is required")?;
                    DatasetConfig {
                        generator: GeneratorConfig::new(scale.params(kind), train + valid + test, seed),
                        train,
                        valid,
                        test,
                        strategy: match planner {
                            Some(cmd) => BaselineStrategy::External(ExternalPlanner::new(cmd)),
                            None => BaselineStrategy::default(),
                        },
                        oracle_budget: (oracle_budget > 0).then_some(oracle_budget),
                    }
                }
            };
            let splits = build_dataset(&cfg)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("dataset-config.json"), serde_json::to_string_pretty(&cfg)?)?;
            write_jsonl(out.join("train.jsonl"), &splits.train)?;
            write_jsonl(out.join("valid.jsonl"), &splits.valid)?;
            write_jsonl(out.join("test.jsonl"), &splits.test)?;
            let solved = splits.test.iter().filter(|r| r.optimal_length.is_some()).count();
            println!(
                "wrote {} train, {} valid, {} test problems to {} ({solved} test optima)",
                splits.train.len(),
                splits.valid.len(),
                splits.test.len(),
                out.display()
            );
        }
        Cmd::Config { domain, scale, seed } => {
            println!("{}", serde_json::to_string_pretty(&LoopConfig::new(scale.params(domain), seed))?);
        }
        Cmd::Validate {
            domain,
            domain_file,
            problem,
            plans,
            dataset,
        } => {
            if let Some(path) = dataset {
                let mut ok = true;
                for r in records(&path)? {
                    let inst = r.instance()?;
                    let task = pddl::ground(r.domain_name.domain_def(), &inst.problem)?;
                    match &r.plan {
                        Some(plan) => {
                            let steps = plan
                                .iter()
                                .map(|s| pddl::parse_plan_text(s).map(|mut v| v.pop()))
                                .collect::<Result<Option<Vec<_>>, _>>()?
                                .unwrap_or_default();
                            ok &= report_plan(&task, &r.id, &steps);
                        }
                        None => println!("{}: no plan", r.id),
                    }
                }
                return Ok(ok);
            }
            let dom_text = match (&domain, &domain_file) {
                (Some(k), _) => k.domain_pddl().to_string(),
                (None, Some(p)) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
                (None, None) => bail!("give --domain or --domain-file"),
            };
            let dom = pddl::parse_domain_named(&dom_text, "domain")?;
            let prob_path = problem.context("--problem is required")?;
            let prob_text = fs::read_to_string(&prob_path).with_context(|| format!("reading {}", prob_path.display()))?;
            let prob = pddl::parse_problem_named(&prob_text, &dom, &prob_path.display().to_string())?;
            let task = pddl::ground(&dom, &prob)?;
            let mut ok = true;
            for p in &plans {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                let steps = pddl::parse_plan_text(&text)?;
                ok &= report_plan(&task, &p.display().to_string(), &steps);
            }
            return Ok(ok);
        }
        Cmd::Pretrain {
            run,
            train,
            valid,
            config,
            seed,
        } => {
            let train = records(&train)?;
            let valid = records(&valid)?;
            let mut cfg = match config {
                Some(p) => read_json::<LoopConfig>(&p)?,
                None => {
                    let kind = train.first().context("training set is empty")?.domain_name;
                    LoopConfig::new(DomainParams::full(kind), 0)
                }
            };
            if let Some(s) = seed {
                cfg.seed = s;
                cfg.pretrain.seed = s;
                cfg.finetune.seed = s;
                cfg.sampler.seed = s;
            }
            let report = RunDir::new(&run).init(&cfg, &train, &valid)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Cmd::Improve { run, iterations, resume } => {
            let dir = RunDir::new(&run);
            let k = match iterations {
                Some(k) => k,
                None => dir.config()?.n_loop,
            };
            for r in dir.improve(k, resume)? {
                println!(
                    "iter {}: {}/{} valid candidates, {} harvested, {} cache improvements, cache mean {}",
                    r.iteration,
                    r.valid_candidates,
                    r.candidates,
                    r.problems_harvested,
                    r.cache_improvements,
                    r.mean_cache_best_length.map_or("-".into(), |m| format!("{m:.3}"))
                );
            }
        }
        Cmd::Evaluate {
            run,
            test,
            ns,
            bfs,
            iteration,
            temperature,
            seed,
            workers,
        } => {
            let dir = RunDir::new(&run);
            let k = match iteration {
                Some(k) => k,
                None => dir.last_completed().context("run has no pretrained policy")?,
            };
            let cfg = dir.config()?;
            let test = records(&test)?;
            if let (Some(tr), Some(te)) = (problem_set(&dir.train_records()?, Split::Train)?, problem_set(&test, Split::Test)?) {
                check_disjoint(&tr, &te)?;
            }
            let ckpt = dir.load_checkpoint(k)?;
            let mut sampler = cfg.sampler.clone();
            if let Some(t) = temperature {
                sampler.temperature = t;
            }
            sampler.seed = seed.unwrap_or(cfg.seed);
            let ecfg = EvalConfig {
                ns,
                with_bfs: bfs,
                sampler,
                workers,
            };
            info!("evaluating iteration {k} on {} problems", test.len());
            let ev = EvalRun {
                iteration: k,
                records: evaluate(&ckpt, &test, &ecfg)?,
                config: ecfg,
            };
            ev.save(&dir.eval_path(k))?;
            let rows = rows_from_eval(&ev, &format!("pi-{k}"));
            fs::write(dir.eval_path(k).with_extension("csv"), rows_csv(&rows)?)?;
            print!("{}", methods_csv(&aggregate(&rows, false)?));
        }
        Cmd::Report { run, out } => {
            let dir = RunDir::new(&run);
            let out = out.unwrap_or_else(|| run.join("report"));
            for p in report_run(&dir, &out)? {
                println!("{}", p.display());
            }
        }
        Cmd::Stats {
            a,
            b,
            label_a,
            label_b,
            pair,
            wilcoxon,
            chi2,
            comparisons,
            out,
        } => {
            let ea = EvalRun::load(&a)?;
            let eb = EvalRun::load(&b)?;
            let mut rows = rows_from_eval(&ea, &label_a);
            rows.extend(rows_from_eval(&eb, &label_b));
            let pairs: Vec<(String, String)> = pair.chunks(2).map(|c| (c[0].clone(), c[1].clone())).collect();
            let mode = match wilcoxon {
                Wilcoxon::Auto => WilcoxonMode::Auto,
                Wilcoxon::Exact => WilcoxonMode::Exact,
                Wilcoxon::Normal => WilcoxonMode::Normal,
            };
            let mc = if chi2 { McNemarMode::ChiSquare } else { McNemarMode::Exact };
            let mut res = compare(&rows, &pairs, mode, mc)?;
            if let Some(k) = comparisons {
                plangen_core::metrics::bonferroni(&mut res, k);
            }
            let csv = stats_csv(&res);
            match out {
                Some(p) => fs::write(p, csv)?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
