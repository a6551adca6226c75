//! Seeded synthetic households for desk-scale experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{TimeSeries, REFIT_SAMPLE_SECONDS};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DutyKind {
    /// Alternates on and off indefinitely, like a fridge compressor.
    Cyclic,
    /// Long idle stretches broken by short full-power bursts, like a kettle.
    Spike,
    /// Long idle stretches broken by multi-stage runs: a full-power heating
    /// stage followed by a low-power stage with periodic half-power pulses.
    Program,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApplianceSpec {
    pub name: String,
    /// Watts drawn while on.
    pub power: f64,
    /// Inclusive range of on-durations, in samples.
    pub on_duration: [usize; 2],
    /// Inclusive range of off-durations, in samples.
    pub off_duration: [usize; 2],
    pub kind: DutyKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub duration_samples: usize,
    pub sample_seconds: i64,
    pub start_unix: i64,
    pub appliances: Vec<ApplianceSpec>,
    /// Standard deviation of the additive Gaussian noise, watts.
    pub noise_std: f64,
    /// Clamp each noise draw at zero instead of clamping the aggregate.
    pub noise_nonnegative: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            duration_samples: 20_000,
            sample_seconds: REFIT_SAMPLE_SECONDS as i64,
            start_unix: 1_393_632_000,
            appliances: Vec::new(),
            noise_std: 20.0,
            noise_nonnegative: false,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    /// 100 W cycling base load plus 2000 W kettle-style spikes.
    pub fn kettle_household(duration_samples: usize, seed: u64) -> Self {
        SyntheticConfig {
            duration_samples,
            appliances: vec![
                ApplianceSpec {
                    name: "fridge".into(),
                    power: 100.0,
                    on_duration: [60, 120],
                    off_duration: [80, 160],
                    kind: DutyKind::Cyclic,
                },
                ApplianceSpec {
                    name: "kettle".into(),
                    power: 2000.0,
                    on_duration: [15, 40],
                    off_duration: [150, 600],
                    kind: DutyKind::Spike,
                },
            ],
            noise_std: 20.0,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.duration_samples == 0 {
            return Err(Error::Config("duration_samples must be at least 1".into()));
        }
        if self.sample_seconds <= 0 {
            return Err(Error::Config("sample_seconds must be positive".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("noise_std must be finite and >= 0, got {}", self.noise_std)));
        }
        for a in &self.appliances {
            if !(a.power >= 0.0 && a.power.is_finite()) {
                return Err(Error::Config(format!("{}: power must be finite and >= 0", a.name)));
            }
            for (what, [lo, hi]) in [("on", a.on_duration), ("off", a.off_duration)] {
                if lo == 0 || hi < lo {
                    return Err(Error::Config(format!(
                        "{}: {what} duration range [{lo}, {hi}] must satisfy 1 <= lo <= hi",
                        a.name
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticHousehold {
    pub aggregate: TimeSeries,
    pub appliances: Vec<TimeSeries>,
    /// `aggregate - Σ appliances` at every sample.
    pub noise: Vec<f64>,
}

fn draw(range: [usize; 2], rng: &mut ChaCha8Rng) -> usize {
    rng.gen_range(range[0]..=range[1])
}

fn appliance_trace(spec: &ApplianceSpec, len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut on = match spec.kind {
        DutyKind::Cyclic => rng.gen_bool(0.5),
        DutyKind::Spike | DutyKind::Program => false,
    };
    while out.len() < len {
        if on {
            let d = draw(spec.on_duration, rng);
            match spec.kind {
                DutyKind::Cyclic | DutyKind::Spike => out.extend(std::iter::repeat(spec.power).take(d)),
                DutyKind::Program => {
                    let heat = (d * 3).div_ceil(10);
                    out.extend(std::iter::repeat(spec.power).take(heat));
                    for k in 0..d - heat {
                        let level = if k % 8 < 2 { 0.5 } else { 0.15 };
                        out.push(spec.power * level);
                    }
                }
            }
        } else {
            let d = draw(spec.off_duration, rng);
            out.extend(std::iter::repeat(0.0).take(d));
        }
        on = !on;
    }
    out.truncate(len);
    out
}

/// Builds every appliance trace and the noisy aggregate. Same config, same output.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticHousehold> {
    config.validate()?;
    let len = config.duration_samples;
    let timestamps: Vec<i64> = (0..len as i64).map(|i| config.start_unix + i * config.sample_seconds).collect();

    let mut appliances = Vec::with_capacity(config.appliances.len());
    let mut sum = vec![0.0; len];
    for (i, spec) in config.appliances.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(i as u64 + 1);
        let trace = appliance_trace(spec, len, &mut rng);
        for (s, v) in sum.iter_mut().zip(&trace) {
            *s += v;
        }
        appliances.push(TimeSeries::new(spec.name.clone(), timestamps.clone(), trace)?);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0);
    let normal = Normal::new(0.0, config.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut aggregate = Vec::with_capacity(len);
    let mut noise = Vec::with_capacity(len);
    for &s in &sum {
        let mut n = if config.noise_std > 0.0 { normal.sample(&mut rng) } else { 0.0 };
        if config.noise_nonnegative {
            n = n.max(0.0);
        }
        let a = (s + n).max(0.0);
        aggregate.push(a);
        noise.push(a - s);
    }
    Ok(SyntheticHousehold {
        aggregate: TimeSeries::new("aggregate", timestamps, aggregate)?,
        appliances,
        noise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_noiseless_appliance_is_the_aggregate() {
        let mut cfg = SyntheticConfig::kettle_household(3000, 4);
        cfg.appliances.truncate(1);
        cfg.noise_std = 0.0;
        let h = generate_synthetic(&cfg).unwrap();
        assert_eq!(h.aggregate.values, h.appliances[0].values);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SyntheticConfig::kettle_household(2000, 11);
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a.aggregate, b.aggregate);
        assert_eq!(a.appliances, b.appliances);
    }

    #[test]
    fn no_appliances_is_clamped_noise() {
        let cfg = SyntheticConfig { duration_samples: 500, noise_std: 5.0, ..Default::default() };
        let h = generate_synthetic(&cfg).unwrap();
        assert!(h.aggregate.values.iter().all(|&v| v >= 0.0));
        assert!(h.aggregate.values.iter().any(|&v| v > 0.0));
        assert_eq!(h.noise, h.aggregate.values);
    }

    #[test]
    fn program_runs_have_stages() {
        let cfg = SyntheticConfig {
            duration_samples: 4000,
            noise_std: 0.0,
            appliances: vec![ApplianceSpec {
                name: "washer".into(),
                power: 2000.0,
                on_duration: [200, 300],
                off_duration: [400, 800],
                kind: DutyKind::Program,
            }],
            ..Default::default()
        };
        let h = generate_synthetic(&cfg).unwrap();
        let v = &h.appliances[0].values;
        for level in [2000.0, 1000.0, 300.0, 0.0] {
            assert!(v.contains(&level), "missing level {level}");
        }
    }

    #[test]
    fn invalid_specs() {
        let mut cfg = SyntheticConfig::kettle_household(100, 0);
        cfg.appliances[0].on_duration = [0, 3];
        assert!(generate_synthetic(&cfg).is_err());
        let mut cfg = SyntheticConfig::kettle_household(100, 0);
        cfg.appliances[1].power = -1.0;
        assert!(generate_synthetic(&cfg).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn aggregate_is_sum_plus_noise(seed in 0u64..500, nonneg in any::<bool>()) {
            let mut cfg = SyntheticConfig::kettle_household(1500, seed);
            cfg.noise_nonnegative = nonneg;
            let h = generate_synthetic(&cfg).unwrap();
            for t in 0..1500 {
                let s: f64 = h.appliances.iter().map(|a| a.values[t]).sum();
                prop_assert!((h.aggregate.values[t] - h.noise[t] - s).abs() < 1e-9);
                if nonneg {
                    for a in &h.appliances {
                        prop_assert!(h.aggregate.values[t] >= a.values[t]);
                    }
                }
            }
        }
    }
}
