use crate::error::CliError;
use besq_mf::ldp::RareEvent;
use besq_mf::{GSpec, GammaParams, InitialLaw, ModelSpec, PhiSpec, Scheme, SchemeConfig};
use clap::ValueEnum;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    /// Interacting particle system; terminal ensemble statistics [1, 2, 8, 10]
    Simulate,
    /// Law flow of the McKean–Vlasov limit, self-consistent or Picard [3, 4, 5]
    Mkv,
    /// Variance flow V(t): closed form, RK4 and the monotonicity time [3]
    Variance,
    /// Stationary Gamma law and its self-consistent φ* [4, 12]
    Stationary,
    /// Laplace-transform PDE by characteristics against Monte Carlo [7]
    Laplace,
    /// Boundary behaviour at zero from m_λ and the bounds of φ [11]
    Boundary,
    /// Rare-event probabilities by importance sampling and decay rates [8, 9]
    Ldp,
    /// Correlation of tagged particles as n grows [6]
    Chaos,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Simulate => "simulate",
            Kind::Mkv => "mkv",
            Kind::Variance => "variance",
            Kind::Stationary => "stationary",
            Kind::Laplace => "laplace",
            Kind::Boundary => "boundary",
            Kind::Ldp => "ldp",
            Kind::Chaos => "chaos",
        }
    }

    /// Accepted keys with their defaults, in manifest order.
    fn schema(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Kind::Simulate => &[
                ("delta", "0"),
                ("phi", "const:1"),
                ("g", "const:2"),
                ("lambda", "point:1"),
                ("n", "1000"),
                ("T", "1"),
                ("dt", "0.01"),
                ("scheme", "exact"),
                ("seed", "1"),
                ("replicas", "1"),
            ],
            Kind::Mkv => &[
                ("delta", "0"),
                ("phi", "const:1"),
                ("g", "const:2"),
                ("lambda", "point:1"),
                ("N", "5000"),
                ("T", "1"),
                ("dt", "0.01"),
                ("scheme", "exact"),
                ("seed", "1"),
                ("solver", "selfconsistent"),
                ("tol", "0.01"),
                ("max_iter", "20"),
            ],
            Kind::Variance => &[("phi", "const:1"), ("lambda", "point:1"), ("T", "1"), ("dt", "0.001")],
            Kind::Stationary => &[
                ("phi", "const:1"),
                ("lambda", "point:1"),
                ("tol", "1e-10"),
                ("max_iter", "200"),
            ],
            Kind::Laplace => &[
                ("phi", "const:1"),
                ("lambda", "point:1"),
                ("N", "20000"),
                ("T", "1"),
                ("dt", "0.01"),
                ("seed", "1"),
                ("times", "0.5,1"),
                ("xs", "0.5,1,2"),
            ],
            Kind::Boundary => &[("m_lambda", "1"), ("phi_inf", "1"), ("phi_sup", "1")],
            Kind::Ldp => &[
                ("delta", "0.1"),
                ("phi", "const:1"),
                ("g", "const:2"),
                ("lambda", "point:1"),
                ("event", "mean_above:1.31"),
                ("n_list", "50,100,200"),
                ("T", "0.1"),
                ("dt", "0.001"),
                ("seed", "1"),
                ("replicas", "10000"),
                ("u_max", "3"),
                ("u_step", "0.005"),
                ("ensemble", "2000"),
            ],
            Kind::Chaos => &[
                ("delta", "0.1"),
                ("phi", "const:1"),
                ("g", "const:2"),
                ("lambda", "point:1"),
                ("n_list", "100,400,1600"),
                ("T", "2"),
                ("dt", "0.05"),
                ("scheme", "exact"),
                ("seed", "1"),
                ("replicas", "2000"),
            ],
        }
    }
}

/// A fully resolved experiment: every schema key carries a value.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub kind: Kind,
    values: Vec<(&'static str, String)>,
}

/// Parses `key=value` tokens; later tokens win.
fn parse_tokens<'a>(
    tokens: impl Iterator<Item = &'a str>,
    into: &mut BTreeMap<String, String>,
) -> Result<(), CliError> {
    for tok in tokens {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected key=value, got `{tok}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(CliError::Config(format!("empty key or value in `{tok}`")));
        }
        into.insert(k.to_string(), v.to_string());
    }
    Ok(())
}

/// Reads a line-oriented config file; `#` starts a comment.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    let lines = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty());
    parse_tokens(lines, &mut out)?;
    Ok(out)
}

impl ExperimentConfig {
    /// Resolves `kind` and keys from the config file (if any) overlaid by the
    /// command-line tokens.
    pub fn resolve(kind: Option<Kind>, file: BTreeMap<String, String>, tokens: &[String]) -> Result<Self, CliError> {
        let mut raw = file;
        parse_tokens(tokens.iter().map(String::as_str), &mut raw)?;
        let from_file = raw.remove("kind");
        let kind = match (kind, from_file) {
            (Some(k), _) => k,
            (None, Some(name)) => Kind::from_str(&name, true)
                .map_err(|_| CliError::Config(format!("unknown experiment kind `{name}`")))?,
            (None, None) => return Err(CliError::Config("no experiment kind given".into())),
        };
        let schema = kind.schema();
        if let Some(bad) = raw.keys().find(|k| !schema.iter().any(|(s, _)| s == k)) {
            let allowed: Vec<&str> = schema.iter().map(|(k, _)| *k).collect();
            return Err(CliError::Config(format!(
                "unknown key `{bad}` for `{}`; accepted keys: {}",
                kind.name(),
                allowed.join(", ")
            )));
        }
        let values = schema
            .iter()
            .map(|(k, default)| (*k, raw.remove(*k).unwrap_or_else(|| default.to_string())))
            .collect();
        Ok(Self { kind, values })
    }

    fn raw(&self, key: &str) -> &str {
        self.values
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v.as_str())
            .unwrap_or_else(|| panic!("`{key}` is not in the schema of `{}`", self.kind.name()))
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        parse_f64(key, self.raw(key))
    }

    pub fn positive(&self, key: &str) -> Result<f64, CliError> {
        let v = self.f64(key)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(CliError::Config(format!("`{key}` must be positive, got {v}")))
        }
    }

    pub fn usize(&self, key: &str) -> Result<usize, CliError> {
        let raw = self.raw(key);
        match raw.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(CliError::Config(format!(
                "`{key}` must be a positive integer, got `{raw}`"
            ))),
        }
    }

    pub fn u64(&self, key: &str) -> Result<u64, CliError> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| CliError::Config(format!("`{key}` must be a non-negative integer, got `{raw}`")))
    }

    pub fn str(&self, key: &str) -> &str {
        self.raw(key)
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        self.raw(key).split(',').map(|s| parse_f64(key, s.trim())).collect()
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>, CliError> {
        self.raw(key)
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::Config(format!("`{key}` must list integers, got `{s}`")))
            })
            .collect()
    }

    pub fn phi(&self) -> Result<PhiSpec, CliError> {
        let raw = self.raw("phi");
        let (tag, args) = split_tagged("phi", raw)?;
        match (tag, args.as_slice()) {
            ("const", [c]) => Ok(PhiSpec::Constant(*c)),
            ("logistic", [a, b, lo, hi]) => Ok(PhiSpec::LogisticInMean {
                a: *a,
                b: *b,
                lo: *lo,
                hi: *hi,
            }),
            _ => Err(CliError::Config(format!(
                "`phi` must be const:c or logistic:a,b,lo,hi, got `{raw}`"
            ))),
        }
    }

    pub fn g(&self) -> Result<GSpec, CliError> {
        let raw = self.raw("g");
        match split_tagged("g", raw)? {
            ("const", args) if args.len() == 1 => Ok(GSpec::Constant(args[0])),
            _ => Err(CliError::Config(format!("`g` must be const:c, got `{raw}`"))),
        }
    }

    pub fn initial_law(&self) -> Result<InitialLaw, CliError> {
        let raw = self.raw("lambda");
        match split_tagged("lambda", raw)? {
            ("point", args) if args.len() == 1 => Ok(InitialLaw::PointMass(args[0])),
            ("gamma", args) if args.len() == 2 => Ok(InitialLaw::GammaLaw(GammaParams::new(args[0], args[1])?)),
            ("atoms", args) if !args.is_empty() => Ok(InitialLaw::AtomList(args)),
            _ => Err(CliError::Config(format!(
                "`lambda` must be point:x, gamma:scale,shape or atoms:x1,x2,..., got `{raw}`"
            ))),
        }
    }

    /// Model from `delta` (0 when the kind has no such key), `phi`, `g` (≡ 2
    /// when absent) and `lambda`.
    pub fn model(&self) -> Result<ModelSpec, CliError> {
        let delta = if self.has("delta") { self.f64("delta")? } else { 0.0 };
        let g = if self.has("g") { self.g()? } else { GSpec::Constant(2.0) };
        Ok(ModelSpec::new(delta, self.phi()?, g, self.initial_law()?))
    }

    pub fn scheme(&self) -> Result<SchemeConfig, CliError> {
        let scheme = if self.has("scheme") {
            self.raw("scheme").parse::<Scheme>()?
        } else {
            Scheme::FullTruncationEuler
        };
        Ok(SchemeConfig::new(self.positive("dt")?, scheme, self.u64("seed")?))
    }

    pub fn event(&self) -> Result<RareEvent, CliError> {
        let raw = self.raw("event");
        match split_tagged("event", raw)? {
            ("mean_above", a) if a.len() == 1 => Ok(RareEvent::TerminalMeanAbove(a[0])),
            ("mean_below", a) if a.len() == 1 => Ok(RareEvent::TerminalMeanBelow(a[0])),
            ("sup_above", a) if a.len() == 1 => Ok(RareEvent::PathSupAbove(a[0])),
            _ => Err(CliError::Config(format!(
                "`event` must be mean_above:a, mean_below:a or sup_above:a, got `{raw}`"
            ))),
        }
    }

    fn has(&self, key: &str) -> bool {
        self.values.iter().any(|(k, _)| *k == key)
    }

    /// Config echo that `--config` accepts back; comment lines carry the
    /// provenance of the run.
    pub fn manifest(&self, wall_time_s: f64, threads: usize, outputs: &[String]) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# besq-mf run manifest");
        let _ = writeln!(s, "# besq-mf version {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "# threads {threads}");
        let _ = writeln!(s, "# wall time {wall_time_s:.3} s");
        let _ = writeln!(s, "# outputs {}", outputs.join(" "));
        let _ = writeln!(s, "kind={}", self.kind.name());
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

fn parse_f64(key: &str, raw: &str) -> Result<f64, CliError> {
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(CliError::Config(format!(
            "`{key}` must be a finite number, got `{raw}`"
        ))),
    }
}

fn split_tagged<'a>(key: &str, raw: &'a str) -> Result<(&'a str, Vec<f64>), CliError> {
    let (tag, rest) = raw
        .split_once(':')
        .ok_or_else(|| CliError::Config(format!("`{key}` expects tag:args, got `{raw}`")))?;
    let args = rest
        .split(',')
        .map(|s| parse_f64(key, s.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((tag, args))
}
