//! Experiment configuration: a flat `key = value` text format with section
//! headers, round-trippable (parse(emit(c)) == c), plus per-experiment
//! presets at desk and paper scale.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExperimentId {
    Grid,
    IpTimevarying,
    McToIp,
    CartpoleToBicycle,
    NegativeTransfer,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 5] = [
        ExperimentId::Grid,
        ExperimentId::IpTimevarying,
        ExperimentId::McToIp,
        ExperimentId::CartpoleToBicycle,
        ExperimentId::NegativeTransfer,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentId::Grid => "grid",
            ExperimentId::IpTimevarying => "ip_timevarying",
            ExperimentId::McToIp => "mc_to_ip",
            ExperimentId::CartpoleToBicycle => "cartpole_to_bicycle",
            ExperimentId::NegativeTransfer => "negative_transfer",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown experiment '{s}'")))
    }

    /// Cross-domain experiments fit an alignment; same-domain ones use the
    /// exact identity map.
    pub fn is_cross_domain(&self) -> bool {
        matches!(self, ExperimentId::McToIp | ExperimentId::CartpoleToBicycle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    TaTl,
    UmaTl,
    Rl,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::TaTl, Method::UmaTl, Method::Rl];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::TaTl => "ta_tl",
            Method::UmaTl => "uma_tl",
            Method::Rl => "rl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Paper,
    Desk,
}

impl Scale {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scale::Paper => "paper",
            Scale::Desk => "desk",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            other => Err(Error::Parse(format!("unknown scale '{other}'"))),
        }
    }
}

/// How apprentice/alignment data is collected in the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollectionPolicy {
    Random,
    /// Execute the mapped source-greedy policy (the grid-world protocol).
    SourceGreedy,
}

impl CollectionPolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            CollectionPolicy::Random => "random",
            CollectionPolicy::SourceGreedy => "source_greedy",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(CollectionPolicy::Random),
            "source_greedy" => Ok(CollectionPolicy::SourceGreedy),
            other => Err(Error::Parse(format!("unknown collection policy '{other}'"))),
        }
    }
}

/// Epsilon-schedule parameters as stored in config files.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsParams {
    pub start: f64,
    pub end: f64,
    pub fraction: f64,
}

impl EpsParams {
    pub fn schedule(&self) -> crate::fqi::EpsilonSchedule {
        crate::fqi::EpsilonSchedule {
            start: self.start,
            end: self.end,
            anneal_fraction: self.fraction,
        }
    }
}

/// FQI hyperparameters for one training role.
#[derive(Debug, Clone, PartialEq)]
pub struct FqiParams {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub learning_rate: f64,
    pub discount: f64,
    pub eps: EpsParams,
}

impl FqiParams {
    pub fn config(&self) -> crate::fqi::FqiConfig {
        crate::fqi::FqiConfig {
            episodes: self.episodes,
            steps_per_episode: self.steps_per_episode,
            learning_rate: self.learning_rate,
            discount: self.discount,
            epsilon: self.eps.schedule(),
            divergence_threshold: 1e6,
            sample_budget: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub scale: Scale,

    // harness
    /// Episode window for the moving-average reward curves.
    pub window: usize,
    /// Evaluation episodes per measurement.
    pub eval_episodes: usize,

    // source task training
    pub fqi_source: FqiParams,
    /// RBF center count for RBF-based source tasks.
    pub source_centers: usize,
    /// RBF bandwidth (covariance diagonal) for RBF-based source tasks.
    pub source_sigma: Vec<f64>,

    // target task training (UMA-TL and RL baselines)
    pub fqi_target: FqiParams,
    /// UMA-TL trusts the transferred policy: its own exploration schedule.
    pub uma_eps: EpsParams,
    /// Optional hard cap on target samples consumed by baseline training.
    pub target_sample_budget: Option<u64>,

    // apprentice
    pub trials: usize,
    pub steps_per_trial: usize,
    /// zeta as a fraction of |source optimal average reward|.
    pub zeta_fraction: f64,
    pub max_refits: usize,
    pub collection: CollectionPolicy,

    // alignment
    pub knn: usize,
    /// 0 = min(source_dim, target_dim).
    pub latent_dim: usize,
    pub round_trip_bound: f64,
    /// Max states per domain fed to the alignment fit (deterministic stride
    /// subsample above this).
    pub alignment_samples: usize,

    // environment overrides
    /// "builtin" or a path to a grid layout file.
    pub grid_layout: String,
    pub bicycle_cap_seconds: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Precondition("at least one method required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Precondition("at least one seed required".into()));
        }
        Ok(())
    }

    /// Built-in defaults per experiment and scale.
    pub fn preset(experiment: ExperimentId, scale: Scale) -> ExperimentConfig {
        let desk = scale == Scale::Desk;
        let seeds: Vec<u64> = (0..10).collect();
        let base = ExperimentConfig {
            experiment,
            methods: vec![Method::TaTl, Method::UmaTl, Method::Rl],
            seeds,
            scale,
            window: 50,
            eval_episodes: 20,
            fqi_source: FqiParams {
                episodes: 400,
                steps_per_episode: 300,
                learning_rate: 5e-3,
                discount: 0.98,
                eps: EpsParams {
                    start: 1.0,
                    end: 0.05,
                    fraction: 0.5,
                },
            },
            source_centers: 20,
            source_sigma: vec![1.2, 1.2],
            fqi_target: FqiParams {
                episodes: 400,
                steps_per_episode: 300,
                learning_rate: 5e-3,
                discount: 0.98,
                eps: EpsParams {
                    start: 1.0,
                    end: 0.05,
                    fraction: 0.5,
                },
            },
            uma_eps: EpsParams {
                start: 0.2,
                end: 0.05,
                fraction: 0.5,
            },
            target_sample_budget: None,
            trials: 50,
            steps_per_trial: 60,
            zeta_fraction: 0.05,
            max_refits: 5,
            collection: CollectionPolicy::Random,
            knn: 10,
            latent_dim: 0,
            round_trip_bound: 0.1,
            alignment_samples: 1500,
            grid_layout: "builtin".into(),
            bicycle_cap_seconds: if desk { 200.0 } else { 1000.0 },
        };
        match experiment {
            ExperimentId::Grid => ExperimentConfig {
                window: 50,
                eval_episodes: 100,
                fqi_source: FqiParams {
                    episodes: if desk { 1500 } else { 4000 },
                    steps_per_episode: 120,
                    learning_rate: 1.0,
                    discount: 0.95,
                    eps: EpsParams {
                        start: 1.0,
                        end: 0.05,
                        fraction: 0.5,
                    },
                },
                fqi_target: FqiParams {
                    episodes: if desk { 1500 } else { 4000 },
                    steps_per_episode: 120,
                    learning_rate: 1.0,
                    discount: 0.95,
                    eps: EpsParams {
                        start: 1.0,
                        end: 0.05,
                        fraction: 0.5,
                    },
                },
                trials: 100,
                steps_per_trial: 40,
                collection: CollectionPolicy::SourceGreedy,
                ..base
            },
            ExperimentId::IpTimevarying | ExperimentId::NegativeTransfer => ExperimentConfig {
                eval_episodes: 20,
                fqi_source: FqiParams {
                    episodes: if desk { 600 } else { 2000 },
                    steps_per_episode: 300,
                    learning_rate: 5e-3,
                    discount: 0.98,
                    eps: EpsParams {
                        start: 1.0,
                        end: 0.05,
                        fraction: 0.5,
                    },
                },
                fqi_target: FqiParams {
                    episodes: if desk { 600 } else { 2000 },
                    steps_per_episode: 300,
                    learning_rate: 5e-3,
                    discount: 0.98,
                    eps: EpsParams {
                        start: 1.0,
                        end: 0.05,
                        fraction: 0.5,
                    },
                },
                trials: 40,
                steps_per_trial: 150,
                ..base
            },
            ExperimentId::McToIp => ExperimentConfig {
                eval_episodes: 20,
                fqi_source: FqiParams {
                    episodes: if desk { 800 } else { 3000 },
                    steps_per_episode: 250,
                    learning_rate: 0.05,
                    discount: 0.99,
                    eps: EpsParams {
                        start: 1.0,
                        end: 0.05,
                        fraction: 0.5,
                    },
                },
                source_centers: 20,
                source_sigma: vec![0.3, 0.1],
                fqi_target: FqiParams {
                    episodes: if desk { 600 } else { 2000 },
                    steps_per_episode: 300,
                    learning_rate: 5e-3,
                    discount: 0.98,
                    eps: EpsParams {
                        start: 1.0,
                        end: 0.05,
                        fraction: 0.5,
                    },
                },
                trials: 40,
                steps_per_trial: 150,
                ..base
            },
            ExperimentId::CartpoleToBicycle => ExperimentConfig {
                eval_episodes: 5,
                window: 20,
                fqi_source: FqiParams {
                    episodes: if desk { 1200 } else { 4000 },
                    steps_per_episode: 500,
                    learning_rate: 1e-4,
                    discount: 0.98,
                    eps: EpsParams {
                        start: 1.0,
                        end: 0.05,
                        fraction: 0.5,
                    },
                },
                fqi_target: FqiParams {
                    episodes: 4000,
                    steps_per_episode: 20_000,
                    learning_rate: 1e-4,
                    discount: 0.98,
                    eps: EpsParams {
                        start: 1.0,
                        end: 0.1,
                        fraction: 0.5,
                    },
                },
                trials: 30,
                steps_per_trial: 700,
                seeds: (0..5).collect(),
                ..base
            },
        }
    }

    /// Canonical text form; `parse` of the output reproduces the config.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        let seeds: Vec<String> = self.seeds.iter().map(|x| x.to_string()).collect();
        let methods: Vec<&str> = self.methods.iter().map(|m| m.as_str()).collect();
        let _ = writeln!(s, "[experiment]");
        let _ = writeln!(s, "id = {}", self.experiment.as_str());
        let _ = writeln!(s, "methods = {}", methods.join(","));
        let _ = writeln!(s, "seeds = {}", seeds.join(","));
        let _ = writeln!(s, "scale = {}", self.scale.as_str());
        let _ = writeln!(s, "\n[harness]");
        let _ = writeln!(s, "window = {}", self.window);
        let _ = writeln!(s, "eval_episodes = {}", self.eval_episodes);
        let fqi = |s: &mut String, name: &str, p: &FqiParams| {
            let _ = writeln!(s, "\n[{name}]");
            let _ = writeln!(s, "episodes = {}", p.episodes);
            let _ = writeln!(s, "steps_per_episode = {}", p.steps_per_episode);
            let _ = writeln!(s, "learning_rate = {}", p.learning_rate);
            let _ = writeln!(s, "discount = {}", p.discount);
            let _ = writeln!(s, "eps_start = {}", p.eps.start);
            let _ = writeln!(s, "eps_end = {}", p.eps.end);
            let _ = writeln!(s, "eps_fraction = {}", p.eps.fraction);
        };
        fqi(&mut s, "fqi_source", &self.fqi_source);
        let _ = writeln!(s, "centers = {}", self.source_centers);
        let sigma: Vec<String> = self.source_sigma.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(s, "sigma = {}", sigma.join(","));
        fqi(&mut s, "fqi_target", &self.fqi_target);
        let _ = writeln!(s, "uma_eps_start = {}", self.uma_eps.start);
        let _ = writeln!(s, "uma_eps_end = {}", self.uma_eps.end);
        let _ = writeln!(s, "uma_eps_fraction = {}", self.uma_eps.fraction);
        let _ = writeln!(
            s,
            "sample_budget = {}",
            self.target_sample_budget
                .map(|b| b.to_string())
                .unwrap_or_else(|| "none".into())
        );
        let _ = writeln!(s, "\n[apprentice]");
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "steps_per_trial = {}", self.steps_per_trial);
        let _ = writeln!(s, "zeta_fraction = {}", self.zeta_fraction);
        let _ = writeln!(s, "max_refits = {}", self.max_refits);
        let _ = writeln!(s, "collection = {}", self.collection.as_str());
        let _ = writeln!(s, "\n[alignment]");
        let _ = writeln!(s, "knn = {}", self.knn);
        let _ = writeln!(s, "latent_dim = {}", self.latent_dim);
        let _ = writeln!(s, "round_trip_bound = {}", self.round_trip_bound);
        let _ = writeln!(s, "alignment_samples = {}", self.alignment_samples);
        let _ = writeln!(s, "\n[env]");
        let _ = writeln!(s, "grid_layout = {}", self.grid_layout);
        let _ = writeln!(s, "bicycle_cap_seconds = {}", self.bicycle_cap_seconds);
        s
    }

    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        // start from the right preset so unspecified keys keep defaults
        let mut kv: Vec<(String, String, String)> = Vec::new(); // (section, key, value)
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            kv.push((
                section.clone(),
                k.trim().to_string(),
                v.trim().to_string(),
            ));
        }
        let find = |sec: &str, key: &str| -> Option<&str> {
            kv.iter()
                .find(|(s, k, _)| s == sec && k == key)
                .map(|(_, _, v)| v.as_str())
        };
        let id = ExperimentId::parse(
            find("experiment", "id")
                .ok_or_else(|| Error::Parse("missing [experiment] id".into()))?,
        )?;
        let scale = match find("experiment", "scale") {
            Some(s) => Scale::parse(s)?,
            None => Scale::Desk,
        };
        let mut cfg = ExperimentConfig::preset(id, scale);

        for (sec, key, value) in &kv {
            apply_kv(&mut cfg, sec, key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn apply_kv(cfg: &mut ExperimentConfig, sec: &str, key: &str, value: &str) -> Result<()> {
    fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
        v.parse()
            .map_err(|_| Error::Parse(format!("bad value '{v}' for {key}")))
    }
    match (sec, key) {
        ("experiment", "id") => cfg.experiment = ExperimentId::parse(value)?,
        ("experiment", "scale") => cfg.scale = Scale::parse(value)?,
        ("experiment", "methods") => {
            cfg.methods = value
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| Method::parse(s.trim()))
                .collect::<Result<_>>()?;
        }
        ("experiment", "seeds") => {
            cfg.seeds = value
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| num("seeds", s.trim()))
                .collect::<Result<_>>()?;
        }
        ("harness", "window") => cfg.window = num(key, value)?,
        ("harness", "eval_episodes") => cfg.eval_episodes = num(key, value)?,
        ("fqi_source", "episodes") => cfg.fqi_source.episodes = num(key, value)?,
        ("fqi_source", "steps_per_episode") => cfg.fqi_source.steps_per_episode = num(key, value)?,
        ("fqi_source", "learning_rate") => cfg.fqi_source.learning_rate = num(key, value)?,
        ("fqi_source", "discount") => cfg.fqi_source.discount = num(key, value)?,
        ("fqi_source", "eps_start") => cfg.fqi_source.eps.start = num(key, value)?,
        ("fqi_source", "eps_end") => cfg.fqi_source.eps.end = num(key, value)?,
        ("fqi_source", "eps_fraction") => cfg.fqi_source.eps.fraction = num(key, value)?,
        ("fqi_source", "centers") => cfg.source_centers = num(key, value)?,
        ("fqi_source", "sigma") => {
            cfg.source_sigma = value
                .split(',')
                .map(|s| num("sigma", s.trim()))
                .collect::<Result<_>>()?;
        }
        ("fqi_target", "episodes") => cfg.fqi_target.episodes = num(key, value)?,
        ("fqi_target", "steps_per_episode") => cfg.fqi_target.steps_per_episode = num(key, value)?,
        ("fqi_target", "learning_rate") => cfg.fqi_target.learning_rate = num(key, value)?,
        ("fqi_target", "discount") => cfg.fqi_target.discount = num(key, value)?,
        ("fqi_target", "eps_start") => cfg.fqi_target.eps.start = num(key, value)?,
        ("fqi_target", "eps_end") => cfg.fqi_target.eps.end = num(key, value)?,
        ("fqi_target", "eps_fraction") => cfg.fqi_target.eps.fraction = num(key, value)?,
        ("fqi_target", "uma_eps_start") => cfg.uma_eps.start = num(key, value)?,
        ("fqi_target", "uma_eps_end") => cfg.uma_eps.end = num(key, value)?,
        ("fqi_target", "uma_eps_fraction") => cfg.uma_eps.fraction = num(key, value)?,
        ("fqi_target", "sample_budget") => {
            cfg.target_sample_budget = if value == "none" {
                None
            } else {
                Some(num(key, value)?)
            };
        }
        ("apprentice", "trials") => cfg.trials = num(key, value)?,
        ("apprentice", "steps_per_trial") => cfg.steps_per_trial = num(key, value)?,
        ("apprentice", "zeta_fraction") => cfg.zeta_fraction = num(key, value)?,
        ("apprentice", "max_refits") => cfg.max_refits = num(key, value)?,
        ("apprentice", "collection") => cfg.collection = CollectionPolicy::parse(value)?,
        ("alignment", "knn") => cfg.knn = num(key, value)?,
        ("alignment", "latent_dim") => cfg.latent_dim = num(key, value)?,
        ("alignment", "round_trip_bound") => cfg.round_trip_bound = num(key, value)?,
        ("alignment", "alignment_samples") => cfg.alignment_samples = num(key, value)?,
        ("env", "grid_layout") => cfg.grid_layout = value.to_string(),
        ("env", "bicycle_cap_seconds") => cfg.bicycle_cap_seconds = num(key, value)?,
        _ => {
            return Err(Error::Parse(format!(
                "unknown config key [{sec}] {key}"
            )))
        }
    }
    Ok(())
}
