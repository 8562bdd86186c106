//! Text form of Eve's strategies, as taken by `--strategy`.
//!
//! ```text
//! none
//! intercept:stage=1,basis=0
//! beamsplit:k=1,n=2,stage=1          (n sets photons per pulse)
//! beamsplit:k=3,n=10,stages=1+2+3
//! probe:kind=cnot,stage=1
//! ```

use std::collections::BTreeMap;

use threestage_core::adversary::{EveStrategy, ProbeKind, StageSet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StrategyParseError {
    #[error("unknown strategy `{0}` (expected none, intercept, beamsplit or probe)")]
    UnknownKind(String),
    #[error("malformed parameter `{0}` (expected key=value)")]
    Malformed(String),
    #[error("unknown parameter `{key}` for {kind}")]
    UnknownKey { kind: &'static str, key: String },
    #[error("missing parameter `{key}` for {kind}")]
    Missing { kind: &'static str, key: &'static str },
    #[error("bad value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

/// A parsed strategy plus the photons-per-pulse it asked for, if any.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategySpec {
    pub strategy: EveStrategy,
    pub photons_per_pulse: Option<u32>,
}

impl std::str::FromStr for StrategySpec {
    type Err = StrategyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_strategy(s)
    }
}

struct Params {
    kind: &'static str,
    map: BTreeMap<String, String>,
}

impl Params {
    fn take<T: std::str::FromStr>(&mut self, key: &'static str) -> Result<Option<T>, StrategyParseError> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| StrategyParseError::BadValue {
                key: key.into(),
                value: v,
            }),
        }
    }

    fn require<T: std::str::FromStr>(&mut self, key: &'static str) -> Result<T, StrategyParseError> {
        self.take(key)?.ok_or(StrategyParseError::Missing { kind: self.kind, key })
    }

    fn stage(&mut self) -> Result<u8, StrategyParseError> {
        let stage: u8 = self.require("stage")?;
        if !(1..=3).contains(&stage) {
            return Err(StrategyParseError::Invalid(format!("stage must be 1, 2 or 3, got {stage}")));
        }
        Ok(stage)
    }

    fn finish(self) -> Result<(), StrategyParseError> {
        match self.map.into_keys().next() {
            Some(key) => Err(StrategyParseError::UnknownKey { kind: self.kind, key }),
            None => Ok(()),
        }
    }
}

pub fn parse_strategy(s: &str) -> Result<StrategySpec, StrategyParseError> {
    let s = s.trim();
    let (name, rest) = s.split_once(':').unwrap_or((s, ""));
    let kind: &'static str = match name {
        "none" => "none",
        "intercept" => "intercept",
        "beamsplit" => "beamsplit",
        "probe" => "probe",
        other => return Err(StrategyParseError::UnknownKind(other.into())),
    };
    let mut map = BTreeMap::new();
    for part in rest.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| StrategyParseError::Malformed(part.into()))?;
        map.insert(k.trim().to_owned(), v.trim().to_owned());
    }
    let mut p = Params { kind, map };
    let mut photons = None;
    let strategy = match kind {
        "none" => EveStrategy::None,
        "intercept" => EveStrategy::InterceptResend {
            stage: p.stage()?,
            basis: p.take("basis")?.unwrap_or(0.0),
        },
        "beamsplit" => {
            let k: u32 = p.require("k")?;
            photons = p.take("n")?;
            let list: Vec<u8> = match (p.map.contains_key("stage"), p.map.remove("stages")) {
                (true, None) => vec![p.stage()?],
                (false, Some(list)) => list
                    .split('+')
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|_| StrategyParseError::BadValue {
                        key: "stages".into(),
                        value: list.clone(),
                    })?,
                (true, Some(_)) => {
                    return Err(StrategyParseError::Invalid("give either stage or stages, not both".into()))
                }
                (false, None) => return Err(StrategyParseError::Missing { kind, key: "stage" }),
            };
            let stages = StageSet::from_stages(&list).map_err(|e| StrategyParseError::Invalid(e.to_string()))?;
            let basis = p.take("basis")?.unwrap_or(0.0);
            let strategy = EveStrategy::BeamSplit { k, stages, basis };
            if let Some(n) = photons {
                strategy
                    .validate(n)
                    .map_err(|e| StrategyParseError::Invalid(e.to_string()))?;
            }
            strategy
        }
        _ => {
            let name: String = p.require("kind")?;
            let probe = ProbeKind::from_name(&name).ok_or(StrategyParseError::BadValue {
                key: "kind".into(),
                value: name,
            })?;
            EveStrategy::UnitaryProbe { probe, stage: p.stage()? }
        }
    };
    p.finish()?;
    Ok(StrategySpec {
        strategy,
        photons_per_pulse: photons,
    })
}
