//! Resolved run configuration: built-in defaults, then an optional
//! `key=value` file, then command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::Args;
use num_complex::Complex64;
use tpa_cavity::model::{PhasePoint, PhysicalParams, TimeGrid};

use crate::CliError;

/// Flags shared by every computing subcommand. `None` means "not given".
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: Option<f64>,
    #[arg(long = "e-re", allow_hyphen_values = true)]
    pub e_re: Option<f64>,
    #[arg(long = "e-im", allow_hyphen_values = true)]
    pub e_im: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long = "t-end", allow_hyphen_values = true)]
    pub t_end: Option<f64>,
    #[arg(long = "n-traj")]
    pub n_traj: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "init-alpha-re", allow_hyphen_values = true)]
    pub init_alpha_re: Option<f64>,
    #[arg(long = "init-alpha-im", allow_hyphen_values = true)]
    pub init_alpha_im: Option<f64>,
    #[arg(long = "init-beta-re", allow_hyphen_values = true)]
    pub init_beta_re: Option<f64>,
    #[arg(long = "init-beta-im", allow_hyphen_values = true)]
    pub init_beta_im: Option<f64>,
    /// Output file (or directory for `sweep --target simulate`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `key=value` file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CubicFlag {
    /// Sign convention of `CubicMode::AsPublished`.
    Paper,
    Derived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MethodFlag {
    Homogeneous,
    Proportional,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepTarget {
    Stationary,
    Simulate,
}

/// Subcommand-specific options that may also come from the config file.
#[derive(Debug, Clone, Default)]
pub struct ModeFlags {
    pub cubic: Option<CubicFlag>,
    pub method: Option<MethodFlag>,
    pub sweep: Option<String>,
    pub target: Option<SweepTarget>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub gamma: f64,
    pub delta: f64,
    pub kappa: f64,
    pub e_re: f64,
    pub e_im: f64,
    pub t0: f64,
    pub dt: f64,
    pub t_end: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub init_alpha_re: f64,
    pub init_alpha_im: f64,
    pub init_beta_re: f64,
    pub init_beta_im: f64,
    pub out: Option<PathBuf>,
    pub cubic: CubicFlag,
    pub method: MethodFlag,
    pub sweep: Option<String>,
    pub target: SweepTarget,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            delta: 0.0,
            kappa: 1.0,
            e_re: 1.0,
            e_im: 0.0,
            t0: 0.0,
            dt: 1e-3,
            t_end: 5.0,
            n_traj: 100,
            seed: 0,
            init_alpha_re: 0.0,
            init_alpha_im: 0.0,
            init_beta_re: 0.0,
            init_beta_im: 0.0,
            out: None,
            cubic: CubicFlag::Derived,
            method: MethodFlag::Homogeneous,
            sweep: None,
            target: SweepTarget::Stationary,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("config key `{key}`: cannot parse `{value}`")))
}

fn parse_enum<T: clap::ValueEnum>(key: &str, value: &str) -> Result<T, CliError> {
    T::from_str(value, false).map_err(|_| CliError::Usage(format!("config key `{key}`: invalid value `{value}`")))
}

impl RunConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "gamma" => self.gamma = parse(key, value)?,
            "delta" => self.delta = parse(key, value)?,
            "kappa" => self.kappa = parse(key, value)?,
            "e_re" => self.e_re = parse(key, value)?,
            "e_im" => self.e_im = parse(key, value)?,
            "t0" => self.t0 = parse(key, value)?,
            "dt" => self.dt = parse(key, value)?,
            "t_end" => self.t_end = parse(key, value)?,
            "n_traj" => self.n_traj = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "init_alpha_re" => self.init_alpha_re = parse(key, value)?,
            "init_alpha_im" => self.init_alpha_im = parse(key, value)?,
            "init_beta_re" => self.init_beta_re = parse(key, value)?,
            "init_beta_im" => self.init_beta_im = parse(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "cubic" => self.cubic = parse_enum(key, value)?,
            "method" => self.method = parse_enum(key, value)?,
            "sweep" => self.sweep = Some(value.to_string()),
            "target" => self.target = parse_enum(key, value)?,
            _ => return Err(CliError::Usage(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a config file body. Blank lines and `#` comments are
    /// skipped; keys may use `-` or `_`.
    pub fn apply_file_contents(&mut self, text: &str) -> Result<(), CliError> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!("config line {}: expected key=value", lineno + 1)));
            };
            self.set(&key.trim().replace('-', "_"), value.trim())?;
        }
        Ok(())
    }

    fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_file_contents(&text)
    }

    pub fn resolve(flags: &Flags, mode: &ModeFlags) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        if let Some(path) = &flags.config {
            cfg.apply_file(path)?;
        }
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = flags.$f { cfg.$f = v; } )* };
        }
        over!(
            gamma,
            delta,
            kappa,
            e_re,
            e_im,
            t0,
            dt,
            t_end,
            n_traj,
            seed,
            init_alpha_re,
            init_alpha_im,
            init_beta_re,
            init_beta_im
        );
        if let Some(out) = &flags.out {
            cfg.out = Some(out.clone());
        }
        if let Some(v) = mode.cubic {
            cfg.cubic = v;
        }
        if let Some(v) = mode.method {
            cfg.method = v;
        }
        if let Some(v) = &mode.sweep {
            cfg.sweep = Some(v.clone());
        }
        if let Some(v) = mode.target {
            cfg.target = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(CliError::Usage(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_end > self.t0) {
            return Err(CliError::Usage(format!("t_end must exceed t0 ({} <= {})", self.t_end, self.t0)));
        }
        if self.n_traj == 0 {
            return Err(CliError::Usage("n_traj must be >= 1".into()));
        }
        let inits = [self.init_alpha_re, self.init_alpha_im, self.init_beta_re, self.init_beta_im];
        if inits.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Usage("initial values must be finite".into()));
        }
        self.params()?;
        self.grid()?;
        Ok(())
    }

    pub fn params(&self) -> Result<PhysicalParams, CliError> {
        Ok(PhysicalParams::new(self.gamma, self.delta, self.kappa, Complex64::new(self.e_re, self.e_im))?)
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        Ok(TimeGrid::span(self.t0, self.t_end, self.dt)?)
    }

    pub fn init(&self) -> PhasePoint {
        PhasePoint::new(
            Complex64::new(self.init_alpha_re, self.init_alpha_im),
            Complex64::new(self.init_beta_re, self.init_beta_im),
        )
    }

    /// Sets a numeric parameter by name (used by `sweep`).
    pub fn set_numeric(&mut self, key: &str, value: f64) -> Result<(), CliError> {
        match key {
            "gamma" | "delta" | "kappa" | "e_re" | "e_im" | "t_end" | "dt" | "init_alpha_re" | "init_alpha_im"
            | "init_beta_re" | "init_beta_im" => self.set(key, &value.to_string()),
            _ => Err(CliError::Usage(format!("cannot sweep `{key}`"))),
        }
    }
}

fn cubic_name(c: CubicFlag) -> &'static str {
    match c {
        CubicFlag::Paper => "paper",
        CubicFlag::Derived => "derived",
    }
}

fn method_name(m: MethodFlag) -> &'static str {
    match m {
        MethodFlag::Homogeneous => "homogeneous",
        MethodFlag::Proportional => "proportional",
        MethodFlag::General => "general",
    }
}

/// Space-separated `key=value` pairs in config-file syntax. The output path
/// is left out so that files written to different places compare equal.
impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "gamma={} delta={} kappa={} e_re={} e_im={} t0={} dt={} t_end={} n_traj={} seed={} \
             init_alpha_re={} init_alpha_im={} init_beta_re={} init_beta_im={} cubic={} method={}",
            self.gamma,
            self.delta,
            self.kappa,
            self.e_re,
            self.e_im,
            self.t0,
            self.dt,
            self.t_end,
            self.n_traj,
            self.seed,
            self.init_alpha_re,
            self.init_alpha_im,
            self.init_beta_re,
            self.init_beta_im,
            cubic_name(self.cubic),
            method_name(self.method),
        )?;
        if let Some(s) = &self.sweep {
            let target = match self.target {
                SweepTarget::Stationary => "stationary",
                SweepTarget::Simulate => "simulate",
            };
            write!(f, " sweep={s} target={target}")?;
        }
        Ok(())
    }
}

/// `name=start:end:count`, inclusive of both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub key: String,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = || CliError::Usage(format!("sweep must look like name=start:end:count, got `{text}`"));
        let (key, range) = text.split_once('=').ok_or_else(bad)?;
        let parts: Vec<&str> = range.split(':').collect();
        let [start, end, count] = parts.as_slice() else {
            return Err(bad());
        };
        let start: f64 = start.trim().parse().map_err(|_| bad())?;
        let end: f64 = end.trim().parse().map_err(|_| bad())?;
        let count: usize = count.trim().parse().map_err(|_| bad())?;
        if count == 0 || !start.is_finite() || !end.is_finite() {
            return Err(bad());
        }
        let values = if count == 1 {
            vec![start]
        } else {
            (0..count)
                .map(|i| {
                    let s = i as f64 / (count - 1) as f64;
                    start * (1.0 - s) + end * s
                })
                .collect()
        };
        Ok(Self { key: key.trim().replace('-', "_"), values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let flags = Flags { kappa: Some(0.5), ..Default::default() };
        let mut cfg = RunConfig::default();
        cfg.apply_file_contents("kappa = 2\n# comment\ngamma=0.25\n").unwrap();
        assert_eq!(cfg.kappa, 2.0);
        assert_eq!(cfg.gamma, 0.25);
        let resolved = RunConfig::resolve(&flags, &ModeFlags::default()).unwrap();
        assert_eq!(resolved.kappa, 0.5);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_file_contents("kapa=1\n").unwrap_err();
        assert!(err.to_string().contains("kapa"));
    }

    #[test]
    fn hyphenated_keys_accepted() {
        let mut cfg = RunConfig::default();
        cfg.apply_file_contents("e-re=3\nt-end=2\n").unwrap();
        assert_eq!((cfg.e_re, cfg.t_end), (3.0, 2.0));
    }

    #[test]
    fn validation_catches_bad_grid() {
        let flags = Flags { dt: Some(-1.0), ..Default::default() };
        assert!(RunConfig::resolve(&flags, &ModeFlags::default()).is_err());
        let flags = Flags { t_end: Some(-1.0), ..Default::default() };
        assert!(RunConfig::resolve(&flags, &ModeFlags::default()).is_err());
        let flags = Flags { n_traj: Some(0), ..Default::default() };
        assert!(RunConfig::resolve(&flags, &ModeFlags::default()).is_err());
    }

    #[test]
    fn display_round_trips() {
        let cfg = RunConfig { kappa: 0.1 + 0.2, seed: u64::MAX, ..Default::default() };
        let mut back = RunConfig::default();
        back.apply_file_contents(&cfg.to_string().replace(' ', "\n")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn sweep_grid() {
        let s = SweepSpec::parse("kappa=0.1:1.0:10").unwrap();
        assert_eq!(s.key, "kappa");
        assert_eq!(s.values.len(), 10);
        assert_eq!(s.values[0], 0.1);
        assert_eq!(s.values[9], 1.0);
        assert!(SweepSpec::parse("kappa=0.1:1.0").is_err());
        assert!(SweepSpec::parse("kappa").is_err());
    }
}
