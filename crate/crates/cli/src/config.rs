//! Run configuration: one TOML file, overridden by command-line flags.
//!
//! Validation walks the whole document and reports every problem at once.

use std::path::{Path, PathBuf};

use iqlink::gnn::GnnConfig;
use iqlink::harness::{Scheme, StopRule};
use iqlink::impairments::IqiScenario;
use iqlink::training::{Supervision, TrainConfig};
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum CodeSource {
    /// Built-in (63, 45) code with the given construction seed.
    Default { seed: u64 },
    Regular { n: usize, col_weight: usize, row_weight: usize, seed: u64 },
    Alist(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEntry {
    pub iqi: IqiScenario,
    /// Checkpoint for the gnn scheme under this scenario.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub code: CodeSource,
    /// Bits per symbol.
    pub bits_per_symbol: usize,
    pub scenarios: Vec<ScenarioEntry>,
    pub schemes: Vec<Scheme>,
    pub conventional_iters: usize,
    pub bp_iters: usize,
    /// `None` keeps the checkpoint's own round count.
    pub gnn_iters: Option<usize>,
    pub gnn: GnnConfig,
    pub train: TrainConfig,
    pub telemetry: Option<PathBuf>,
    pub snr_list_db: Vec<f64>,
    pub stop: StopRule,
    pub sweep_seed: u64,
    pub csv: Option<PathBuf>,
    pub checkpoint_out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            code: CodeSource::Default { seed: 1 },
            bits_per_symbol: 2,
            scenarios: vec![ScenarioEntry {
                iqi: IqiScenario::ideal(),
                checkpoint: None,
            }],
            schemes: vec![Scheme::Bp],
            conventional_iters: Scheme::Conventional.default_iters(),
            bp_iters: Scheme::Bp.default_iters(),
            gnn_iters: None,
            gnn: GnnConfig::default(),
            train: TrainConfig::default(),
            telemetry: None,
            snr_list_db: (2..=9).map(f64::from).collect(),
            stop: StopRule::default(),
            sweep_seed: 1,
            csv: None,
            checkpoint_out: None,
        }
    }
}

/// Collects problems with their TOML key paths.
struct Reader<'a> {
    errors: &'a mut Vec<String>,
    base: PathBuf,
}

impl Reader<'_> {
    fn err(&mut self, key: &str, msg: impl std::fmt::Display) {
        self.errors.push(format!("{key}: {msg}"));
    }

    fn table<'t>(&mut self, root: &'t Table, key: &str) -> Option<&'t Table> {
        match root.get(key) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.err(key, "expected a table");
                None
            }
        }
    }

    fn check_keys(&mut self, t: &Table, section: &str, allowed: &[&str]) {
        for k in t.keys() {
            if !allowed.contains(&k.as_str()) {
                self.err(&format!("{section}.{k}"), "unknown key");
            }
        }
    }

    fn uint(&mut self, t: &Table, section: &str, key: &str) -> Option<u64> {
        match t.get(key)? {
            Value::Integer(i) if *i >= 0 => Some(*i as u64),
            other => {
                self.err(&format!("{section}.{key}"), format!("expected a non-negative integer, found {other}"));
                None
            }
        }
    }

    fn positive(&mut self, t: &Table, section: &str, key: &str) -> Option<usize> {
        let v = self.uint(t, section, key)?;
        if v == 0 {
            self.err(&format!("{section}.{key}"), "must be >= 1");
            return None;
        }
        Some(v as usize)
    }

    fn float(&mut self, t: &Table, section: &str, key: &str) -> Option<f64> {
        match t.get(key)? {
            Value::Float(f) if f.is_finite() => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            other => {
                self.err(&format!("{section}.{key}"), format!("expected a finite number, found {other}"));
                None
            }
        }
    }

    fn string(&mut self, t: &Table, section: &str, key: &str) -> Option<String> {
        match t.get(key)? {
            Value::String(s) => Some(s.clone()),
            other => {
                self.err(&format!("{section}.{key}"), format!("expected a string, found {other}"));
                None
            }
        }
    }

    fn flag(&mut self, t: &Table, section: &str, key: &str) -> Option<bool> {
        match t.get(key)? {
            Value::Boolean(b) => Some(*b),
            other => {
                self.err(&format!("{section}.{key}"), format!("expected true or false, found {other}"));
                None
            }
        }
    }

    fn path(&mut self, t: &Table, section: &str, key: &str) -> Option<PathBuf> {
        self.string(t, section, key).map(|s| self.base.join(s))
    }

    fn existing(&mut self, t: &Table, section: &str, key: &str) -> Option<PathBuf> {
        let p = self.path(t, section, key)?;
        if !p.is_file() {
            self.err(&format!("{section}.{key}"), format!("file {} does not exist", p.display()));
        }
        Some(p)
    }

    /// `"inf"` or a missing key is the ideal sentinel.
    fn irr(&mut self, t: &Table, section: &str, key: &str) -> Option<f64> {
        match t.get(key) {
            None => None,
            Some(Value::String(s)) if s == "inf" => None,
            Some(Value::Float(f)) if f.is_infinite() && *f > 0.0 => None,
            Some(Value::Float(f)) if f.is_finite() && *f > 0.0 => Some(*f),
            Some(Value::Integer(i)) if *i > 0 => Some(*i as f64),
            Some(other) => {
                self.err(&format!("{section}.{key}"), format!("expected a positive dB value or \"inf\", found {other}"));
                None
            }
        }
    }

    fn float_list(&mut self, t: &Table, section: &str, key: &str) -> Option<Vec<f64>> {
        match t.get(key)? {
            Value::Array(items) => {
                let mut out = Vec::new();
                for (i, v) in items.iter().enumerate() {
                    match v {
                        Value::Float(f) if f.is_finite() => out.push(*f),
                        Value::Integer(n) => out.push(*n as f64),
                        other => self.err(&format!("{section}.{key}[{i}]"), format!("expected a number, found {other}")),
                    }
                }
                Some(out)
            }
            other => {
                self.err(&format!("{section}.{key}"), format!("expected an array, found {other}"));
                None
            }
        }
    }

    fn iqi(&mut self, t: &Table, section: &str) -> IqiScenario {
        let theta_deg = self.float(t, section, "theta_deg").unwrap_or(IqiScenario::DEFAULT_THETA_DEG);
        let iqi = IqiScenario {
            tx_irr_db: self.irr(t, section, "tx_irr_db"),
            rx_irr_db: self.irr(t, section, "rx_irr_db"),
            theta_deg,
        };
        if let Err(e) = iqi.mixers() {
            self.err(section, e);
        }
        iqi
    }
}

/// Parses configuration text. Relative paths resolve against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<RunConfig, Vec<String>> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| vec![format!("config is not valid TOML: {e}")])?;
    let mut errors = Vec::new();
    let mut cfg = RunConfig::default();
    let mut r = Reader {
        errors: &mut errors,
        base: base.to_path_buf(),
    };
    r.check_keys(&root, "config", &["code", "modem", "scenario", "decoder", "gnn", "train", "sweep", "output"]);

    if let Some(t) = r.table(&root, "code") {
        r.check_keys(t, "code", &["n", "col_weight", "row_weight", "seed", "alist"]);
        let seed = r.uint(t, "code", "seed").unwrap_or(1);
        let weights = (t.get("col_weight").is_some(), t.get("row_weight").is_some());
        if t.contains_key("alist") {
            if t.contains_key("n") || weights != (false, false) {
                r.err("code", "give either alist or n/col_weight/row_weight, not both");
            }
            if let Some(p) = r.existing(t, "code", "alist") {
                cfg.code = CodeSource::Alist(p);
            }
        } else if weights == (true, true) {
            let n = r.positive(t, "code", "n").unwrap_or(63);
            let wc = r.positive(t, "code", "col_weight");
            let wr = r.positive(t, "code", "row_weight");
            if let (Some(col_weight), Some(row_weight)) = (wc, wr) {
                cfg.code = CodeSource::Regular { n, col_weight, row_weight, seed };
            }
        } else if weights != (false, false) {
            r.err("code", "col_weight and row_weight must be given together");
        } else {
            if let Some(n) = r.positive(t, "code", "n") {
                if n != 63 {
                    r.err("code.n", "the built-in code has n = 63; give col_weight and row_weight for other lengths");
                }
            }
            cfg.code = CodeSource::Default { seed };
        }
    }

    if let Some(t) = r.table(&root, "modem") {
        r.check_keys(t, "modem", &["order"]);
        if let Some(order) = r.positive(t, "modem", "order") {
            let bps = order.trailing_zeros() as usize;
            if !order.is_power_of_two() || bps % 2 != 0 || bps == 0 {
                r.err("modem.order", format!("{order} is not a square QAM order (4, 16, 64, ...)"));
            } else {
                cfg.bits_per_symbol = bps;
            }
        }
    }

    match root.get("scenario") {
        None => {}
        Some(Value::Array(items)) => {
            let mut scenarios = Vec::new();
            for (i, item) in items.iter().enumerate() {
                let section = format!("scenario[{i}]");
                let Value::Table(t) = item else {
                    r.err(&section, "expected a table");
                    continue;
                };
                r.check_keys(t, &section, &["tx_irr_db", "rx_irr_db", "theta_deg", "checkpoint"]);
                let iqi = r.iqi(t, &section);
                let checkpoint = r.path(t, &section, "checkpoint");
                scenarios.push(ScenarioEntry { iqi, checkpoint });
            }
            if scenarios.is_empty() {
                r.err("scenario", "at least one scenario is required");
            }
            cfg.scenarios = scenarios;
        }
        Some(_) => r.err("scenario", "expected an array of tables ([[scenario]])"),
    }

    let mut default_checkpoint = None;
    if let Some(t) = r.table(&root, "decoder") {
        r.check_keys(t, "decoder", &["scheme", "conventional_iters", "bp_iters", "gnn_iters", "checkpoint"]);
        match t.get("scheme") {
            None => {}
            Some(Value::String(s)) => match s.parse() {
                Ok(s) => cfg.schemes = vec![s],
                Err(e) => r.err("decoder.scheme", e),
            },
            Some(Value::Array(items)) => {
                let mut schemes = Vec::new();
                for (i, v) in items.iter().enumerate() {
                    match v.as_str().map(str::parse::<Scheme>) {
                        Some(Ok(s)) => schemes.push(s),
                        Some(Err(e)) => r.err(&format!("decoder.scheme[{i}]"), e),
                        None => r.err(&format!("decoder.scheme[{i}]"), "expected a string"),
                    }
                }
                if items.is_empty() {
                    r.err("decoder.scheme", "at least one scheme is required");
                }
                cfg.schemes = schemes;
            }
            Some(other) => r.err("decoder.scheme", format!("expected a name or a list of names, found {other}")),
        }
        cfg.conventional_iters = r.positive(t, "decoder", "conventional_iters").unwrap_or(cfg.conventional_iters);
        cfg.bp_iters = r.positive(t, "decoder", "bp_iters").unwrap_or(cfg.bp_iters);
        cfg.gnn_iters = r.positive(t, "decoder", "gnn_iters");
        default_checkpoint = r.path(t, "decoder", "checkpoint");
    }
    for s in &mut cfg.scenarios {
        if s.checkpoint.is_none() {
            s.checkpoint.clone_from(&default_checkpoint);
        }
    }

    if let Some(t) = r.table(&root, "gnn") {
        r.check_keys(t, "gnn", &["vn_dim", "cn_dim", "msg_dim", "hidden_dim", "iters", "share_weights_across_iters"]);
        let g = &mut cfg.gnn;
        g.vn_dim = r.positive(t, "gnn", "vn_dim").unwrap_or(g.vn_dim);
        g.cn_dim = r.positive(t, "gnn", "cn_dim").unwrap_or(g.cn_dim);
        g.msg_dim = r.positive(t, "gnn", "msg_dim").unwrap_or(g.msg_dim);
        g.hidden_dim = r.positive(t, "gnn", "hidden_dim").unwrap_or(g.hidden_dim);
        g.iters = r.positive(t, "gnn", "iters").unwrap_or(g.iters);
        g.share_weights_across_iters = r
            .flag(t, "gnn", "share_weights_across_iters")
            .unwrap_or(g.share_weights_across_iters);
    }

    cfg.train.scenario = cfg.scenarios.first().map_or_else(IqiScenario::ideal, |s| s.iqi);
    if let Some(t) = r.table(&root, "train") {
        r.check_keys(
            t,
            "train",
            &[
                "batch_size", "steps", "lr", "beta1", "beta2", "eps", "snr_range_db", "seed", "tx_irr_db",
                "rx_irr_db", "theta_deg", "checkpoint", "telemetry", "supervision",
            ],
        );
        let tc = &mut cfg.train;
        tc.batch_size = r.positive(t, "train", "batch_size").unwrap_or(tc.batch_size);
        tc.steps = r.uint(t, "train", "steps").map_or(tc.steps, |v| v as usize);
        tc.lr = r.float(t, "train", "lr").unwrap_or(tc.lr);
        tc.beta1 = r.float(t, "train", "beta1").unwrap_or(tc.beta1);
        tc.beta2 = r.float(t, "train", "beta2").unwrap_or(tc.beta2);
        tc.eps = r.float(t, "train", "eps").unwrap_or(tc.eps);
        tc.seed = r.uint(t, "train", "seed").unwrap_or(tc.seed);
        match r.string(t, "train", "supervision").as_deref() {
            None => {}
            Some("every_round") => tc.supervision = Supervision::EveryRound,
            Some("final_round") => tc.supervision = Supervision::FinalRound,
            Some(other) => r.err(
                "train.supervision",
                format!("expected \"every_round\" or \"final_round\", got {other:?}"),
            ),
        }
        if let Some(range) = r.float_list(t, "train", "snr_range_db") {
            match range.as_slice() {
                [lo, hi] => tc.snr_range_db = (*lo, *hi),
                [point] => tc.snr_range_db = (*point, *point),
                _ => r.err("train.snr_range_db", "expected [low, high] or [point]"),
            }
        }
        if ["tx_irr_db", "rx_irr_db", "theta_deg"].iter().any(|k| t.contains_key(*k)) {
            tc.scenario = r.iqi(t, "train");
        }
        cfg.checkpoint_out = r.path(t, "train", "checkpoint");
        cfg.telemetry = r.path(t, "train", "telemetry");
    }
    if let Err(e) = cfg.train.validate() {
        r.err("train", e);
    }
    if let Err(e) = cfg.gnn.validate() {
        r.err("gnn", e);
    }

    if let Some(t) = r.table(&root, "sweep") {
        r.check_keys(t, "sweep", &["snr_list_db", "min_errors", "max_bits", "seed"]);
        if let Some(list) = r.float_list(t, "sweep", "snr_list_db") {
            cfg.snr_list_db = list;
        }
        cfg.stop.min_errors = r.uint(t, "sweep", "min_errors").unwrap_or(cfg.stop.min_errors);
        cfg.stop.max_bits = r.uint(t, "sweep", "max_bits").unwrap_or(cfg.stop.max_bits);
        if cfg.stop.max_bits == 0 {
            r.err("sweep.max_bits", "must be >= 1");
        }
        cfg.sweep_seed = r.uint(t, "sweep", "seed").unwrap_or(cfg.sweep_seed);
    }

    if let Some(t) = r.table(&root, "output") {
        r.check_keys(t, "output", &["csv"]);
        cfg.csv = r.path(t, "output", "csv");
    }

    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(errors)
    }
}

/// Parses a comma-separated SNR list such as `2,4.5,7`.
pub fn parse_snr_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|x| {
            let x = x.trim();
            x.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("--snr: `{x}` is not a number"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, Vec<String>> {
        parse_config(text, Path::new("."))
    }

    #[test]
    fn empty_config_is_all_defaults() {
        assert_eq!(parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn full_config() {
        let cfg = parse(
            r#"
            [code]
            n = 24
            col_weight = 2
            row_weight = 4
            seed = 3
            [modem]
            order = 16
            [[scenario]]
            tx_irr_db = "inf"
            rx_irr_db = "inf"
            [[scenario]]
            tx_irr_db = 20
            rx_irr_db = 25.5
            theta_deg = 3
            checkpoint = "a.ckpt"
            [decoder]
            scheme = ["bp", "gnn"]
            bp_iters = 10
            checkpoint = "b.ckpt"
            [train]
            steps = 5
            snr_range_db = [4, 6]
            supervision = "final_round"
            [sweep]
            snr_list_db = [1, 2.5]
            min_errors = 10
            max_bits = 1000
            seed = 9
            [output]
            csv = "out.csv"
            "#,
        )
        .unwrap();
        assert_eq!(
            cfg.code,
            CodeSource::Regular {
                n: 24,
                col_weight: 2,
                row_weight: 4,
                seed: 3
            }
        );
        assert_eq!(cfg.bits_per_symbol, 4);
        assert_eq!(cfg.scenarios.len(), 2);
        assert!(cfg.scenarios[0].iqi.is_ideal());
        assert_eq!(cfg.scenarios[0].checkpoint, Some(PathBuf::from("./b.ckpt")));
        assert_eq!(cfg.scenarios[1].iqi.rx_irr_db, Some(25.5));
        assert_eq!(cfg.scenarios[1].checkpoint, Some(PathBuf::from("./a.ckpt")));
        assert_eq!(cfg.schemes, vec![Scheme::Bp, Scheme::Gnn]);
        assert_eq!(cfg.bp_iters, 10);
        assert_eq!(cfg.train.steps, 5);
        assert_eq!(cfg.train.snr_range_db, (4.0, 6.0));
        assert!(cfg.train.scenario.is_ideal());
        assert_eq!(cfg.train.supervision, Supervision::FinalRound);
        assert_eq!(cfg.snr_list_db, vec![1.0, 2.5]);
        assert_eq!(cfg.stop.min_errors, 10);
        assert_eq!(cfg.sweep_seed, 9);
    }

    #[test]
    fn all_errors_reported_together() {
        let errs = parse(
            r#"
            bogus = 1
            [code]
            alist = "missing.alist"
            [modem]
            order = 8
            [decoder]
            scheme = "turbo"
            [train]
            batch_size = 0
            lr = -1.0
            supervision = "sometimes"
            [sweep]
            snr_list_db = ["x"]
            "#,
        )
        .unwrap_err();
        let joined = errs.join("\n");
        for needle in ["config.bogus", "code.alist", "modem.order", "decoder.scheme", "train.batch_size", "train.supervision", "lr must be positive", "snr_list_db[0]"] {
            assert!(joined.contains(needle), "missing `{needle}` in:\n{joined}");
        }
    }

    #[test]
    fn snr_list_flag() {
        assert_eq!(parse_snr_list("2, 4.5,7").unwrap(), vec![2.0, 4.5, 7.0]);
        assert!(parse_snr_list("2,,3").is_err());
        assert!(parse_snr_list("nan").is_err());
    }
}
