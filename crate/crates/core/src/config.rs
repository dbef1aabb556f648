//! Experiment configuration files.
//!
//! ```text
//! [graph]
//! source = sbm
//! noise = 2
//!
//! [train]
//! strategies = single, llcg
//! rounds = 40
//! ```
//!
//! Sections and keys are fixed; unknown keys, duplicates and bad values are
//! all collected and reported together. `#` and `;` start comments. Every key
//! has a default, and [`ExperimentConfig::to_text`] writes the effective
//! configuration back out in a form that parses to the same value.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{gen_sbm, load_graph, Graph, SbmParams};
use crate::model::{AdamConfig, Arch, Model, OptimizerKind};
use crate::partition::{parse_assignment, partition_greedy, partition_random, Partition};
use crate::sim::{KappaSchedule, Strategy, TrainPlan};

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    Sbm(SbmParams),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PartitionMethod {
    Random,
    Greedy,
    /// A saved assignment file.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    pub method: PartitionMethod,
    pub parts: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub arch: Arch,
    pub hidden: usize,
    /// Seed of the initial weights.
    pub seed: u64,
}

impl ModelSpec {
    /// Layer widths for a graph with `features` inputs and `classes` outputs.
    pub fn dims(&self, features: usize, classes: usize) -> Vec<usize> {
        let mut dims = vec![features];
        dims.extend(std::iter::repeat_n(self.hidden, self.arch.len() - 1));
        dims.push(classes);
        dims
    }

    pub fn init(&self, graph: &Graph) -> Result<Model> {
        Model::init(
            self.arch.clone(),
            self.dims(graph.feature_dim(), graph.num_classes()),
            self.seed,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSpec {
    pub kappa: KappaSchedule,
    /// Monte Carlo samples for the sampling-bias report; 0 disables it.
    pub bias_samples: usize,
    pub bias_batch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    pub partition: PartitionSpec,
    pub model: ModelSpec,
    pub strategies: Vec<Strategy>,
    /// Hyperparameters shared by every strategy; `strategy` and `machines`
    /// are filled in per run.
    pub train: TrainPlan,
    pub metrics: MetricsSpec,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainPlan::default();
        ExperimentConfig {
            graph: GraphSource::Sbm(SbmParams::default()),
            partition: PartitionSpec {
                method: PartitionMethod::Random,
                parts: train.machines,
                seed: 0,
            },
            model: ModelSpec {
                arch: "G,G".parse().expect("static arch"),
                hidden: 16,
                seed: 0,
            },
            strategies: Strategy::ALL.to_vec(),
            train,
            metrics: MetricsSpec {
                kappa: KappaSchedule::Off,
                bias_samples: 0,
                bias_batch: 32,
            },
            output: PathBuf::from("out"),
        }
    }
}

const KEYS: &[(&str, &[&str])] = &[
    (
        "graph",
        &[
            "source",
            "path",
            "blocks",
            "per_block",
            "p_intra",
            "p_inter",
            "feature_dim",
            "noise",
            "seed",
        ],
    ),
    ("partition", &["method", "parts", "seed", "path"]),
    ("model", &["arch", "hidden", "seed"]),
    (
        "train",
        &[
            "strategies",
            "rounds",
            "k",
            "rho",
            "correction_steps",
            "eta",
            "gamma",
            "fanout",
            "local_batch",
            "server_batch",
            "correction_fanout",
            "optimizer",
            "seed",
        ],
    ),
    ("metrics", &["kappa", "bias_samples", "bias_batch"]),
    ("output", &["dir"]),
];

struct Entry {
    value: String,
    line: usize,
}

/// Raw key/value map plus accumulated problems.
struct Fields {
    map: BTreeMap<(String, String), Entry>,
    errors: Vec<String>,
}

impl Fields {
    fn take(&mut self, section: &str, key: &str) -> Option<Entry> {
        self.map.remove(&(section.to_string(), key.to_string()))
    }

    fn get<T>(
        &mut self,
        section: &str,
        key: &str,
        default: T,
        parse: impl Fn(&str) -> std::result::Result<T, String>,
    ) -> T {
        match self.take(section, key) {
            None => default,
            Some(e) => match parse(&e.value) {
                Ok(v) => v,
                Err(msg) => {
                    self.errors.push(format!("{section}.{key} (line {}): {msg}", e.line));
                    default
                }
            },
        }
    }

    fn num<T: FromStr>(&mut self, section: &str, key: &str, default: T) -> T {
        self.get(section, key, default, |s| {
            s.parse::<T>()
                .map_err(|_| format!("`{s}` is not a valid {}", std::any::type_name::<T>()))
        })
    }
}

fn lex(text: &str) -> Fields {
    let mut fields = Fields {
        map: BTreeMap::new(),
        errors: Vec::new(),
    };
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split(['#', ';']).next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            match name.strip_suffix(']') {
                Some(name) if KEYS.iter().any(|(s, _)| *s == name.trim()) => section = Some(name.trim().to_string()),
                Some(name) => {
                    fields
                        .errors
                        .push(format!("line {line}: unknown section [{}]", name.trim()));
                    section = None;
                }
                None => fields.errors.push(format!("line {line}: unterminated section header")),
            }
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            fields.errors.push(format!("line {line}: expected `key = value`"));
            continue;
        };
        let key = key.trim().to_string();
        let Some(sec) = section.clone() else {
            fields
                .errors
                .push(format!("line {line}: key `{key}` outside any known section"));
            continue;
        };
        let known = KEYS.iter().any(|(s, keys)| *s == sec && keys.contains(&key.as_str()));
        if !known {
            fields.errors.push(format!("{sec}.{key} (line {line}): unknown key"));
            continue;
        }
        let entry = Entry {
            value: value.trim().to_string(),
            line,
        };
        if let Some(prev) = fields.map.insert((sec.clone(), key.clone()), entry) {
            fields.errors.push(format!(
                "{sec}.{key} (line {line}): duplicate key, first set on line {}",
                prev.line
            ));
        }
    }
    fields
}

fn parse_strategies(s: &str) -> std::result::Result<Vec<Strategy>, String> {
    let mut out = Vec::new();
    for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
        let st: Strategy = name.parse().map_err(|_| format!("unknown strategy `{name}`"))?;
        if out.contains(&st) {
            return Err(format!("strategy `{name}` listed twice"));
        }
        out.push(st);
    }
    if out.is_empty() {
        return Err("at least one strategy is required".into());
    }
    Ok(out)
}

fn parse_kappa(s: &str) -> std::result::Result<KappaSchedule, String> {
    match s {
        "off" => Ok(KappaSchedule::Off),
        "checkpoints" => Ok(KappaSchedule::Checkpoints),
        "every" => Ok(KappaSchedule::Every),
        _ => Err(format!("`{s}` is not one of off, checkpoints, every")),
    }
}

fn kappa_name(k: KappaSchedule) -> &'static str {
    match k {
        KappaSchedule::Off => "off",
        KappaSchedule::Checkpoints => "checkpoints",
        KappaSchedule::Every => "every",
    }
}

fn parse_optimizer(s: &str) -> std::result::Result<OptimizerKind, String> {
    match s {
        "sgd" => Ok(OptimizerKind::Sgd),
        "adam" => Ok(OptimizerKind::Adam(AdamConfig::default())),
        _ => Err(format!("`{s}` is not one of sgd, adam")),
    }
}

fn parse_fanout(s: &str) -> std::result::Result<Option<usize>, String> {
    if s == "none" {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| format!("`{s}` is neither `none` nor a count"))
}

impl ExperimentConfig {
    /// Parses configuration text, filling unspecified keys with defaults.
    /// Does not touch the filesystem.
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let d = ExperimentConfig::default();
        let mut f = lex(text);

        let sbm_default = match &d.graph {
            GraphSource::Sbm(p) => p.clone(),
            GraphSource::File(_) => SbmParams::default(),
        };
        let source = f.get("graph", "source", "sbm".to_string(), |s| match s {
            "sbm" | "file" => Ok(s.to_string()),
            _ => Err(format!("`{s}` is not one of sbm, file")),
        });
        let graph_path = f.take("graph", "path");
        let sbm = SbmParams {
            blocks: f.num("graph", "blocks", sbm_default.blocks),
            per_block: f.num("graph", "per_block", sbm_default.per_block),
            p_intra: f.num("graph", "p_intra", sbm_default.p_intra),
            p_inter: f.num("graph", "p_inter", sbm_default.p_inter),
            feature_dim: f.num("graph", "feature_dim", sbm_default.feature_dim),
            noise: f.num("graph", "noise", sbm_default.noise),
            seed: f.num("graph", "seed", sbm_default.seed),
        };
        let graph = match (source.as_str(), graph_path) {
            ("file", Some(p)) => GraphSource::File(PathBuf::from(p.value)),
            ("file", None) => {
                f.errors.push("graph.path: required when graph.source = file".into());
                GraphSource::Sbm(sbm)
            }
            (_, Some(p)) => {
                f.errors.push(format!(
                    "graph.path (line {}): only allowed when graph.source = file",
                    p.line
                ));
                GraphSource::Sbm(sbm)
            }
            _ => {
                if let Err(e) = sbm.validate() {
                    f.errors.push(format!("graph: {e}"));
                }
                GraphSource::Sbm(sbm)
            }
        };

        let method = f.get("partition", "method", "random".to_string(), |s| match s {
            "random" | "greedy" | "file" => Ok(s.to_string()),
            _ => Err(format!("`{s}` is not one of random, greedy, file")),
        });
        let part_path = f.take("partition", "path");
        let method = match (method.as_str(), part_path) {
            ("file", Some(p)) => PartitionMethod::File(PathBuf::from(p.value)),
            ("file", None) => {
                f.errors
                    .push("partition.path: required when partition.method = file".into());
                PartitionMethod::Random
            }
            (_, Some(p)) => {
                f.errors.push(format!(
                    "partition.path (line {}): only allowed when partition.method = file",
                    p.line
                ));
                PartitionMethod::Random
            }
            ("greedy", None) => PartitionMethod::Greedy,
            _ => PartitionMethod::Random,
        };
        let partition = PartitionSpec {
            method,
            parts: f.num("partition", "parts", d.partition.parts),
            seed: f.num("partition", "seed", d.partition.seed),
        };
        if partition.parts == 0 {
            f.errors.push("partition.parts: must be at least 1".into());
        }

        let model = ModelSpec {
            arch: f.get("model", "arch", d.model.arch.clone(), |s| {
                s.parse::<Arch>().map_err(|e| e.to_string())
            }),
            hidden: f.num("model", "hidden", d.model.hidden),
            seed: f.num("model", "seed", d.model.seed),
        };
        if model.hidden == 0 {
            f.errors.push("model.hidden: must be at least 1".into());
        }

        let strategies = f.get("train", "strategies", d.strategies.clone(), parse_strategies);
        let t = &d.train;
        let train = TrainPlan {
            strategy: t.strategy,
            machines: partition.parts,
            rounds: f.num("train", "rounds", t.rounds),
            k: f.num("train", "k", t.k),
            rho: f.num("train", "rho", t.rho),
            correction_steps: f.num("train", "correction_steps", t.correction_steps),
            eta: f.num("train", "eta", t.eta),
            gamma: f.num("train", "gamma", t.gamma),
            fanout: f.num("train", "fanout", t.fanout),
            local_batch: f.num("train", "local_batch", t.local_batch),
            server_batch: f.num("train", "server_batch", t.server_batch),
            correction_fanout: f.get("train", "correction_fanout", t.correction_fanout, parse_fanout),
            optimizer: f.get("train", "optimizer", t.optimizer, parse_optimizer),
            seed: f.num("train", "seed", t.seed),
            kappa: t.kappa,
        };
        let metrics = MetricsSpec {
            kappa: f.get("metrics", "kappa", d.metrics.kappa, parse_kappa),
            bias_samples: f.num("metrics", "bias_samples", d.metrics.bias_samples),
            bias_batch: f.num("metrics", "bias_batch", d.metrics.bias_batch),
        };
        if metrics.bias_samples == 1 {
            f.errors
                .push("metrics.bias_samples: must be 0 (off) or at least 2".into());
        }
        if metrics.bias_batch == 0 {
            f.errors.push("metrics.bias_batch: must be at least 1".into());
        }
        let train = TrainPlan {
            kappa: metrics.kappa,
            ..train
        };
        if partition.parts > 0 {
            if let Err(e) = train.validate() {
                f.errors.push(format!("train: {e}"));
            }
        }
        let output = f.get("output", "dir", d.output.clone(), |s| {
            if s.is_empty() {
                Err("must not be empty".into())
            } else {
                Ok(PathBuf::from(s))
            }
        });

        if !f.errors.is_empty() {
            return Err(Error::Config(f.errors));
        }
        Ok(ExperimentConfig {
            graph,
            partition,
            model,
            strategies,
            train,
            metrics,
            output,
        })
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Checks that every referenced input file exists.
    pub fn check_paths(&self) -> Result<()> {
        let mut errors = Vec::new();
        if let GraphSource::File(p) = &self.graph {
            if !p.is_file() {
                errors.push(format!("graph.path: `{}` does not exist", p.display()));
            }
        }
        if let PartitionMethod::File(p) = &self.partition.method {
            if !p.is_file() {
                errors.push(format!("partition.path: `{}` does not exist", p.display()));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    /// Replaces every seed with `seed` except the dataset's own.
    pub fn override_seed(&mut self, seed: u64) {
        self.partition.seed = seed;
        self.model.seed = seed;
        self.train.seed = seed;
    }

    /// The effective configuration, every key spelled out.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let sbm = match &self.graph {
            GraphSource::Sbm(p) => {
                s.push_str("[graph]\nsource = sbm\n");
                p.clone()
            }
            GraphSource::File(path) => {
                let _ = writeln!(s, "[graph]\nsource = file\npath = {}", path.display());
                SbmParams::default()
            }
        };
        let _ = writeln!(
            s,
            "blocks = {}\nper_block = {}\np_intra = {}\np_inter = {}\nfeature_dim = {}\nnoise = {}\nseed = {}\n",
            sbm.blocks, sbm.per_block, sbm.p_intra, sbm.p_inter, sbm.feature_dim, sbm.noise, sbm.seed
        );
        s.push_str("[partition]\n");
        match &self.partition.method {
            PartitionMethod::Random => s.push_str("method = random\n"),
            PartitionMethod::Greedy => s.push_str("method = greedy\n"),
            PartitionMethod::File(p) => {
                let _ = writeln!(s, "method = file\npath = {}", p.display());
            }
        }
        let _ = writeln!(s, "parts = {}\nseed = {}\n", self.partition.parts, self.partition.seed);
        let _ = writeln!(
            s,
            "[model]\narch = {}\nhidden = {}\nseed = {}\n",
            self.model.arch, self.model.hidden, self.model.seed
        );
        let t = &self.train;
        let names: Vec<&str> = self.strategies.iter().map(|x| x.name()).collect();
        let _ = writeln!(
            s,
            "[train]\nstrategies = {}\nrounds = {}\nk = {}\nrho = {}\ncorrection_steps = {}\neta = {}\ngamma = {}\nfanout = {}\nlocal_batch = {}\nserver_batch = {}\ncorrection_fanout = {}\noptimizer = {}\nseed = {}\n",
            names.join(", "),
            t.rounds,
            t.k,
            t.rho,
            t.correction_steps,
            t.eta,
            t.gamma,
            t.fanout,
            t.local_batch,
            t.server_batch,
            t.correction_fanout.map_or("none".to_string(), |f| f.to_string()),
            match t.optimizer {
                OptimizerKind::Sgd => "sgd",
                OptimizerKind::Adam(_) => "adam",
            },
            t.seed
        );
        let _ = writeln!(
            s,
            "[metrics]\nkappa = {}\nbias_samples = {}\nbias_batch = {}\n",
            kappa_name(self.metrics.kappa),
            self.metrics.bias_samples,
            self.metrics.bias_batch
        );
        let _ = writeln!(s, "[output]\ndir = {}", self.output.display());
        s
    }

    pub fn build_graph(&self) -> Result<Graph> {
        match &self.graph {
            GraphSource::Sbm(p) => gen_sbm(p),
            GraphSource::File(path) => load_graph(path),
        }
    }

    pub fn build_partition(&self, graph: &Graph) -> Result<Partition> {
        let spec = &self.partition;
        match &spec.method {
            PartitionMethod::Random => partition_random(graph, spec.parts, spec.seed),
            PartitionMethod::Greedy => partition_greedy(graph, spec.parts, spec.seed),
            PartitionMethod::File(path) => {
                let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                Partition::from_assignment(graph, parse_assignment(&bytes)?, spec.parts)
            }
        }
    }

    /// The plan for one strategy.
    pub fn plan(&self, strategy: Strategy) -> TrainPlan {
        TrainPlan {
            strategy,
            machines: self.partition.parts,
            ..self.train.clone()
        }
    }
}
