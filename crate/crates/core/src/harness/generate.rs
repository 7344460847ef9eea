use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::predictor::seqfile;
use crate::rng;

/// Payoff sequence source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Constant {
        value: f64,
    },
    /// ±1 with `P(+1) = p`.
    Bernoulli {
        p: f64,
    },
    /// `k` equal intervals; interval `j` draws ±1 with mean `levels[j mod len]`.
    Shifting {
        k: usize,
        levels: Vec<f64>,
    },
    /// `amp·sin(2πt/period)`.
    Sinusoid {
        period: f64,
        amp: f64,
    },
    File {
        path: PathBuf,
    },
    /// ±1 with `P(+1) = (1+ε)/2`.
    AdversarialLb {
        epsilon: f64,
    },
}

impl Generator {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant { value } if !(value.abs() <= 1.0) => Err(invalid("constant", "value must lie in [-1, 1]")),
            Self::Bernoulli { p } if !(0.0..=1.0).contains(p) => Err(invalid("bernoulli", "p must lie in [0, 1]")),
            Self::Shifting { k, levels } => {
                if *k == 0 || levels.is_empty() {
                    return Err(invalid("shifting", "need k ≥ 1 and at least one level"));
                }
                if levels.iter().any(|m| !(m.abs() <= 1.0)) {
                    return Err(invalid("shifting", "levels must lie in [-1, 1]"));
                }
                Ok(())
            }
            Self::Sinusoid { period, amp } if !(*period > 0.0 && amp.abs() <= 1.0) => {
                Err(invalid("sinusoid", "need period > 0 and |amp| ≤ 1"))
            }
            Self::AdversarialLb { epsilon } if !(0.0..=1.0).contains(epsilon) => {
                Err(invalid("adversarial-lb", "epsilon must lie in [0, 1]"))
            }
            _ => Ok(()),
        }
    }

    /// Interval boundaries of the shifting generator.
    pub fn intervals(k: usize, horizon: usize) -> Vec<(usize, usize)> {
        (0..k).map(|j| (j * horizon / k, (j + 1) * horizon / k)).collect()
    }

    /// `horizon` values, deterministic in `(seed, stream)`. File sequences
    /// ignore `horizon` and the seed.
    pub fn generate(&self, horizon: usize, seed: u64, stream: u64) -> Result<Vec<f64>> {
        self.validate()?;
        let mut r = rng::stream(seed, stream);
        let mut coin = |p: f64| if r.random::<f64>() < p { 1.0 } else { -1.0 };
        Ok(match self {
            Self::Constant { value } => vec![*value; horizon],
            Self::Bernoulli { p } => (0..horizon).map(|_| coin(*p)).collect(),
            Self::AdversarialLb { epsilon } => (0..horizon).map(|_| coin(0.5 * (1.0 + epsilon))).collect(),
            Self::Shifting { k, levels } => {
                let mut out = Vec::with_capacity(horizon);
                for (j, (a, b)) in Self::intervals(*k, horizon).into_iter().enumerate() {
                    let p = 0.5 * (1.0 + levels[j % levels.len()]);
                    out.extend((a..b).map(|_| coin(p)));
                }
                out
            }
            Self::Sinusoid { period, amp } => (0..horizon)
                .map(|t| amp * (2.0 * std::f64::consts::PI * (t + 1) as f64 / period).sin())
                .collect(),
            Self::File { path } => seqfile::read(path)?,
        })
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant { value } => write!(f, "constant:{value}"),
            Self::Bernoulli { p } => write!(f, "bernoulli:{p}"),
            Self::Shifting { k, levels } => {
                let l: Vec<String> = levels.iter().map(f64::to_string).collect();
                write!(f, "shifting:{k}:{}", l.join(","))
            }
            Self::Sinusoid { period, amp } => write!(f, "sinusoid:{period}:{amp}"),
            Self::File { path } => write!(f, "file:{}", path.display()),
            Self::AdversarialLb { epsilon } => write!(f, "adversarial-lb:{epsilon}"),
        }
    }
}

/// Parses `name[:arg[:arg]]`, e.g. `bernoulli:0.5`, `shifting:4:0.6,-0.6`,
/// `sinusoid:200:0.8`, `file:seq.txt`, `adversarial-lb:0.1`.
impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let num = |v: &str, what: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("generator {name}: bad {what} {v:?}")))
        };
        let g = match name {
            "constant" => Self::Constant {
                value: if rest.is_empty() { 1.0 } else { num(rest, "value")? },
            },
            "bernoulli" => Self::Bernoulli {
                p: if rest.is_empty() { 0.5 } else { num(rest, "p")? },
            },
            "shifting" => {
                let (k, levels) = rest.split_once(':').unwrap_or((rest, "0.6,-0.6"));
                let k = k
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("generator shifting: bad k {k:?}")))?;
                let levels = levels.split(',').map(|v| num(v, "level")).collect::<Result<_>>()?;
                Self::Shifting { k, levels }
            }
            "sinusoid" => {
                let (p, a) = rest.split_once(':').unwrap_or((rest, "1"));
                Self::Sinusoid {
                    period: num(p, "period")?,
                    amp: num(a, "amplitude")?,
                }
            }
            "file" => {
                if rest.is_empty() {
                    return Err(Error::Parse("generator file: missing path".into()));
                }
                Self::File { path: rest.into() }
            }
            "adversarial-lb" => Self::AdversarialLb {
                epsilon: if rest.is_empty() { 0.1 } else { num(rest, "epsilon")? },
            },
            other => return Err(Error::Parse(format!("unknown generator {other:?}"))),
        };
        g.validate()?;
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{Binomial, DiscreteCDF};

    #[test]
    fn constant_and_determinism() {
        let g: Generator = "constant:1".parse().unwrap();
        assert_eq!(g.generate(5, 0, 0).unwrap(), vec![1.0; 5]);
        let b: Generator = "bernoulli:0.5".parse().unwrap();
        assert_eq!(b.generate(1000, 3, 0).unwrap(), b.generate(1000, 3, 0).unwrap());
        assert_ne!(b.generate(1000, 3, 0).unwrap(), b.generate(1000, 4, 0).unwrap());
    }

    #[test]
    fn parse_round_trip_and_errors() {
        for s in [
            "constant:0.5",
            "bernoulli:0.25",
            "shifting:4:0.6,-0.6",
            "sinusoid:200:0.8",
            "adversarial-lb:0.1",
            "file:x.txt",
        ] {
            let g: Generator = s.parse().unwrap();
            assert_eq!(g.to_string().parse::<Generator>().unwrap(), g);
        }
        let err = "gaussian:1".parse::<Generator>().unwrap_err();
        assert!(err.to_string().contains("gaussian"));
        assert!("bernoulli:1.5".parse::<Generator>().is_err());
    }

    #[test]
    fn shifting_interval_means_are_binomial() {
        let g = Generator::Shifting {
            k: 4,
            levels: vec![0.6, -0.6],
        };
        let seq = g.generate(10_000, 11, 0).unwrap();
        for (j, (a, b)) in Generator::intervals(4, 10_000).into_iter().enumerate() {
            let n = (b - a) as u64;
            let p = 0.5 * (1.0 + if j % 2 == 0 { 0.6 } else { -0.6 });
            let ups = seq[a..b].iter().filter(|&&v| v > 0.0).count() as u64;
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((ups as f64 - n as f64 * p).abs() <= 4.0 * sd);
            // Exact two-sided tail under the binomial law.
            let bin = Binomial::new(p, n).unwrap();
            let tail = bin.cdf(ups).min(1.0 - bin.cdf(ups.saturating_sub(1)));
            assert!(tail > 1e-5, "interval {j}: tail {tail}");
        }
    }

    #[test]
    fn file_generator_reads_sequences() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.txt");
        std::fs::write(&p, "1\n-0.5\n# c\n0\n").unwrap();
        let g = Generator::File { path: p };
        assert_eq!(g.generate(99, 0, 0).unwrap(), vec![1.0, -0.5, 0.0]);
    }

    #[test]
    fn sinusoid_is_bounded() {
        let g: Generator = "sinusoid:50:0.8".parse().unwrap();
        let s = g.generate(500, 0, 0).unwrap();
        assert!(s.iter().all(|v| v.abs() <= 0.8 + 1e-15));
        assert!((s[49]).abs() < 1e-12);
    }
}
