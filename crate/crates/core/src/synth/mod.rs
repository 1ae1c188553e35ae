//! Planted-signal synthetic cohorts.
//!
//! Diagnoses follow a power-law prevalence over the leaves of a random code
//! tree. Each leaf carries an additive log-LOS effect and a mortality logit;
//! rare leaves carry larger effects than common ones. The hourly vitals see
//! the summed diagnosis effect through a persistent per-patient offset, so a
//! single patient's series is only weakly informative while patients that
//! share a diagnosis jointly reveal its effect.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::{read_string, write_string};
use crate::preprocess::{write_records, Diagnosis, Labels, Observation, PatientRecord};

pub const TRUTH_FILE: &str = "truth.csv";
pub const EFFECTS_FILE: &str = "effects.csv";

/// Vital-sign channels: name, mean, spread, sign of the diagnosis loading.
const CHANNELS: [(&str, f64, f64, f64); 6] = [
    ("heart_rate", 85.0, 12.0, 1.0),
    ("resp_rate", 18.0, 4.0, 1.0),
    ("systolic_bp", 120.0, 15.0, -1.0),
    ("spo2", 96.0, 2.0, -1.0),
    ("temperature", 37.0, 0.6, 1.0),
    ("glucose", 140.0, 30.0, 1.0),
];
const UNITS: [&str; 4] = ["micu", "sicu", "ccu", "neuro"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_patients: usize,
    /// Leaf diagnoses of the code tree.
    pub m_leaf: usize,
    /// Levels per code path, leaves included.
    pub depth: usize,
    /// Power-law exponent of leaf prevalence over prevalence rank.
    pub zipf_exponent: f64,
    /// Floor on the expected fraction of patients carrying each leaf, so the
    /// tail of the power law stays above the retention threshold. Approximate
    /// when `max_diagnoses` truncates draws.
    pub min_leaf_prevalence: f64,
    /// Mean of the Poisson number of diagnoses beyond the first.
    pub extra_diagnoses: f64,
    pub max_diagnoses: usize,
    /// The most prevalent leaves, which get `common_effect_scale`.
    pub common_leaves: usize,
    /// Half-normal scale of the log-LOS effect of the other leaves.
    pub effect_scale: f64,
    pub common_effect_scale: f64,
    /// Normal scale of per-leaf mortality logits.
    pub mortality_scale: f64,
    pub los_baseline: f64,
    pub ihm_baseline: f64,
    /// Standard deviation of the unexplained log-LOS noise.
    pub los_noise: f64,
    /// Time-series channels, at most six.
    pub channels: usize,
    pub horizon: usize,
    /// Loading of the summed diagnosis effect on every channel.
    pub series_signal: f64,
    /// Persistent per-patient, per-channel offset.
    pub series_patient_noise: f64,
    /// Per-observation noise.
    pub series_noise: f64,
    pub missing_rate: f64,
    pub static_missing_rate: f64,
    /// Extra leaves each given to exactly two patients.
    pub planted_pairs: usize,
    pub planted_effect: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_patients: 2000,
            m_leaf: 60,
            depth: 3,
            zipf_exponent: 1.5,
            min_leaf_prevalence: 0.0125,
            extra_diagnoses: 1.0,
            max_diagnoses: 5,
            common_leaves: 8,
            effect_scale: 1.0,
            common_effect_scale: 0.2,
            mortality_scale: 0.6,
            los_baseline: 0.7,
            ihm_baseline: -2.5,
            los_noise: 0.25,
            channels: 4,
            horizon: 24,
            series_signal: 1.0,
            series_patient_noise: 0.8,
            series_noise: 0.3,
            missing_rate: 0.2,
            static_missing_rate: 0.05,
            planted_pairs: 0,
            planted_effect: 1.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.depth == 0 {
            return bad("depth must be positive");
        }
        if self.m_leaf < self.depth {
            return Err(Error::Config(format!(
                "m_leaf ({}) must be at least the hierarchy depth ({})",
                self.m_leaf, self.depth
            )));
        }
        if self.n_patients < 2 {
            return bad("need at least two patients");
        }
        if self.channels == 0 || self.channels > CHANNELS.len() {
            return Err(Error::Config(format!("channels must be in 1..={}", CHANNELS.len())));
        }
        if self.horizon == 0 {
            return bad("horizon must be positive");
        }
        if self.max_diagnoses == 0 || self.max_diagnoses > self.m_leaf {
            return bad("max_diagnoses must be in 1..=m_leaf");
        }
        if 2 * self.planted_pairs > self.n_patients {
            return bad("planted pairs need two distinct patients each");
        }
        let non_negative = [
            self.zipf_exponent,
            self.min_leaf_prevalence,
            self.extra_diagnoses,
            self.effect_scale,
            self.common_effect_scale,
            self.mortality_scale,
            self.los_noise,
            self.series_patient_noise,
            self.series_noise,
        ];
        if non_negative.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return bad("scales and rates must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.missing_rate) || !(0.0..1.0).contains(&self.static_missing_rate) {
            return bad("missing rates must be in [0, 1)");
        }
        Ok(())
    }
}

/// Latent effects of one leaf diagnosis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisEffect {
    /// Full `|`-joined code path.
    pub code: String,
    pub los_effect: f64,
    pub mortality_effect: f64,
    /// Patients carrying the leaf.
    pub count: usize,
    pub planted: bool,
}

/// Per-patient latent quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientTruth {
    pub patient_id: String,
    /// Deterministic part of log LOS.
    pub log_los_mean: f64,
    pub ihm_logit: f64,
    pub los: f64,
    pub ihm: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub los_noise: f64,
    pub patients: Vec<PatientTruth>,
    pub effects: Vec<DiagnosisEffect>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCohort {
    pub records: Vec<PatientRecord>,
    pub truth: GroundTruth,
}

struct CodeTree {
    /// Full paths of the leaves, in leaf order.
    leaves: Vec<Vec<String>>,
    /// Paths of the level above the leaves, for attaching planted leaves.
    parents: Vec<Vec<String>>,
}

fn code_tree(m_leaf: usize, depth: usize, rng: &mut ChaCha8Rng) -> CodeTree {
    // Level widths grow geometrically up to m_leaf.
    let widths: Vec<usize> = (1..=depth)
        .map(|l| ((m_leaf as f64).powf(l as f64 / depth as f64).round() as usize).clamp(1, m_leaf))
        .collect();
    let mut level: Vec<Vec<String>> = (0..widths[0]).map(|i| vec![format!("C{i:02}")]).collect();
    let mut parents = Vec::new();
    for (l, &width) in widths.iter().enumerate().skip(1) {
        let width = width.max(level.len());
        let mut owner: Vec<usize> = (0..level.len()).collect();
        owner.extend((level.len()..width).map(|_| rng.random_range(0..level.len())));
        owner.sort_unstable();
        let mut next = Vec::with_capacity(width);
        let mut child = vec![0usize; level.len()];
        for p in owner {
            let mut path = level[p].clone();
            path.push(format!("{}.{}", path[l - 1], child[p]));
            child[p] += 1;
            next.push(path);
        }
        parents = std::mem::replace(&mut level, next);
    }
    CodeTree { leaves: level, parents }
}

fn sample_leaves(weights: &WeightedIndex<f64>, count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut chosen: Vec<usize> = Vec::with_capacity(count);
    while chosen.len() < count {
        let d = weights.sample(rng);
        if !chosen.contains(&d) {
            chosen.push(d);
        }
    }
    chosen
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("finite non-negative sd")
}

/// Generates a cohort. The same config always yields the same cohort.
/// Normalized shares with every entry at least `floor` after normalization
/// (all equal when `floor * len >= 1`).
fn floored_shares(weights: &[f64], floor: f64) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let shares: Vec<f64> = weights.iter().map(|w| w / total).collect();
    if floor <= 0.0 {
        return shares;
    }
    if floor * shares.len() as f64 >= 1.0 {
        return vec![1.0 / shares.len() as f64; shares.len()];
    }
    // Raise the smallest shares to `f` and scale the rest so all sum to one;
    // the floored set only grows as `f` is recomputed.
    let mut floored = vec![false; shares.len()];
    loop {
        let free: f64 = shares.iter().zip(&floored).filter(|(_, &f)| !f).map(|(s, _)| s).sum();
        let n_floored = floored.iter().filter(|&&f| f).count() as f64;
        let scale = (1.0 - floor * n_floored) / free;
        let mut changed = false;
        for (i, s) in shares.iter().enumerate() {
            if !floored[i] && s * scale < floor {
                floored[i] = true;
                changed = true;
            }
        }
        if !changed {
            return shares
                .iter()
                .zip(&floored)
                .map(|(s, &f)| if f { floor } else { s * scale })
                .collect();
        }
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthCohort> {
    config.validate()?;
    let c = config;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let tree = code_tree(c.m_leaf, c.depth, &mut rng);

    // Prevalence ranks are a random permutation of the leaves.
    let mut rank: Vec<usize> = (0..c.m_leaf).collect();
    rank.shuffle(&mut rng);
    let zipf: Vec<f64> = rank.iter().map(|&r| ((r + 1) as f64).powf(-c.zipf_exponent)).collect();
    let weights = floored_shares(&zipf, c.min_leaf_prevalence / (1.0 + c.extra_diagnoses));
    let index = WeightedIndex::new(&weights).map_err(|e| Error::Config(format!("prevalence weights: {e}")))?;
    let std_normal = normal(1.0);
    let mut effects: Vec<DiagnosisEffect> = tree
        .leaves
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let scale = if rank[i] < c.common_leaves {
                c.common_effect_scale
            } else {
                c.effect_scale
            };
            DiagnosisEffect {
                code: path.join("|"),
                los_effect: scale * std_normal.sample(&mut rng).abs(),
                mortality_effect: c.mortality_scale * std_normal.sample(&mut rng),
                count: 0,
                planted: false,
            }
        })
        .collect();
    let mut leaf_paths = tree.leaves.clone();

    let extra = (c.extra_diagnoses > 0.0)
        .then(|| Poisson::new(c.extra_diagnoses).expect("positive rate"));
    let mut assigned: Vec<Vec<usize>> = (0..c.n_patients)
        .map(|_| {
            let k = 1 + extra.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
            sample_leaves(&index, k.min(c.max_diagnoses), &mut rng)
        })
        .collect();

    if c.planted_pairs > 0 {
        let mut order: Vec<usize> = (0..c.n_patients).collect();
        order.shuffle(&mut rng);
        for pair in 0..c.planted_pairs {
            let mut path = if tree.parents.is_empty() {
                Vec::new()
            } else {
                tree.parents[rng.random_range(0..tree.parents.len())].clone()
            };
            let parent = path.last().cloned().unwrap_or_else(|| "P".into());
            path.push(format!("{parent}.p{pair}"));
            effects.push(DiagnosisEffect {
                code: path.join("|"),
                los_effect: c.planted_effect,
                mortality_effect: 0.0,
                count: 0,
                planted: true,
            });
            leaf_paths.push(path);
            let leaf = leaf_paths.len() - 1;
            assigned[order[2 * pair]].push(leaf);
            assigned[order[2 * pair + 1]].push(leaf);
        }
    }

    let width = (c.n_patients.max(2) - 1).to_string().len();
    let exp_gap = Exp::new(1.25).expect("positive rate");
    let los_noise = normal(c.los_noise);
    let mut records = Vec::with_capacity(c.n_patients);
    let mut patients = Vec::with_capacity(c.n_patients);
    for (i, leaves) in assigned.iter().enumerate() {
        let id = format!("p{i:0width$}");
        let age = rng.random_range(18.0f64..90.0).round();
        let female = rng.random_bool(0.45);
        let admission_hour = rng.random_range(0..24) as f64;
        let unit = UNITS[rng.random_range(0..UNITS.len())];
        let weight = 80.0 + 15.0 * std_normal.sample(&mut rng);

        let mut effect_sum = 0.0;
        let mut mortality_sum = 0.0;
        let mut diagnoses = Vec::with_capacity(leaves.len());
        for &leaf in leaves {
            effects[leaf].count += 1;
            effect_sum += effects[leaf].los_effect;
            mortality_sum += effects[leaf].mortality_effect;
            diagnoses.push(Diagnosis {
                path: leaf_paths[leaf].clone(),
                hour: (rng.random_range(0.0f64..20.0) * 100.0).round() / 100.0,
            });
        }
        let age_term = (age - 60.0) / 20.0;
        let log_los_mean = c.los_baseline + effect_sum + 0.1 * age_term;
        let los = (log_los_mean + los_noise.sample(&mut rng)).exp().max(1.0);
        let ihm_logit = c.ihm_baseline + mortality_sum + 0.4 * age_term + 0.5 * effect_sum;
        let ihm = rng.random_bool(1.0 / (1.0 + (-ihm_logit).exp()));

        let offsets: Vec<f64> = (0..c.channels)
            .map(|_| c.series_patient_noise * std_normal.sample(&mut rng))
            .collect();
        let mut series: BTreeMap<String, Vec<Observation>> = BTreeMap::new();
        let mut hour = rng.random_range(0.0f64..1.5);
        let end = c.horizon as f64 + 4.0;
        let mut first = true;
        while hour < end {
            let t = (hour * 100.0).round() / 100.0;
            for (ch, &(name, mean, spread, sign)) in CHANNELS[..c.channels].iter().enumerate() {
                if !first && rng.random_bool(c.missing_rate) {
                    continue;
                }
                // Mild deterioration over the stay, scaled by the effect.
                let drift = 0.02 * t * effect_sum;
                let z = sign * c.series_signal * (effect_sum - 1.0 + drift)
                    + offsets[ch]
                    + c.series_noise * std_normal.sample(&mut rng);
                let value = ((mean + spread * z) * 100.0).round() / 100.0;
                series.entry(name.to_string()).or_default().push(Observation { hour: t, value });
            }
            first = false;
            hour += 0.25 + exp_gap.sample(&mut rng);
        }

        let mut static_numeric = BTreeMap::new();
        if !rng.random_bool(c.static_missing_rate) {
            static_numeric.insert("age".to_string(), age);
        }
        if !rng.random_bool(c.static_missing_rate) {
            static_numeric.insert("weight".to_string(), (weight * 10.0).round() / 10.0);
        }
        static_numeric.insert("admission_hour".to_string(), admission_hour);
        let record = PatientRecord {
            patient_id: id.clone(),
            static_numeric,
            static_categorical: BTreeMap::from([("unit".to_string(), unit.to_string())]),
            static_binary: BTreeMap::from([("female".to_string(), female)]),
            diagnoses,
            series,
            labels: Some(Labels { ihm, los }),
        };
        record.validate()?;
        records.push(record);
        patients.push(PatientTruth {
            patient_id: id,
            log_los_mean,
            ihm_logit,
            los,
            ihm,
        });
    }
    Ok(SynthCohort {
        records,
        truth: GroundTruth {
            los_noise: c.los_noise,
            patients,
            effects,
        },
    })
}

impl GroundTruth {
    /// `truth.csv` and `effects.csv` in `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut truth = format!("# los_noise={}\npatient_id,log_los_mean,ihm_logit,los,ihm\n", self.los_noise);
        for p in &self.patients {
            truth.push_str(&format!(
                "{},{},{},{},{}\n",
                p.patient_id,
                p.log_los_mean,
                p.ihm_logit,
                p.los,
                u8::from(p.ihm)
            ));
        }
        write_string(&dir.join(TRUTH_FILE), &truth)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let path = dir.join(EFFECTS_FILE);
        let to_err = |e: csv::Error| Error::parse(&path, e.to_string());
        for e in &self.effects {
            w.serialize(e).map_err(to_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::parse(&path, e.to_string()))?;
        write_string(&path, &String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(TRUTH_FILE);
        let text = read_string(&path)?;
        let mut lines = text.lines();
        let los_noise = lines
            .next()
            .and_then(|l| l.strip_prefix("# los_noise="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(&path, "missing `# los_noise=` line"))?;
        let body: String = lines.map(|l| format!("{l}\n")).collect();
        let mut rdr = csv::Reader::from_reader(body.as_bytes());
        let mut patients = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| Error::parse(&path, e.to_string()))?;
            let num = |k: usize| -> Result<f64> {
                row.get(k)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::parse(&path, format!("bad value in column {k}")))
            };
            patients.push(PatientTruth {
                patient_id: row.get(0).unwrap_or_default().to_string(),
                log_los_mean: num(1)?,
                ihm_logit: num(2)?,
                los: num(3)?,
                ihm: num(4)? > 0.5,
            });
        }
        let path = dir.join(EFFECTS_FILE);
        let text = read_string(&path)?;
        let effects = csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .collect::<std::result::Result<Vec<DiagnosisEffect>, _>>()
            .map_err(|e| Error::parse(&path, e.to_string()))?;
        Ok(Self {
            los_noise,
            patients,
            effects,
        })
    }
}

impl SynthCohort {
    /// Ingestion files plus the ground-truth files.
    pub fn save(&self, dir: &Path) -> Result<()> {
        write_records(dir, &self.records)?;
        self.truth.save(dir)
    }
}

/// `E[log(1 + max(1, exp(mu + e)))]` for `e ~ N(0, sd^2)`, by Simpson's rule.
fn expected_log1p_los(mu: f64, sd: f64) -> f64 {
    let f = |e: f64| (mu + e).exp().max(1.0).ln_1p();
    if sd == 0.0 {
        return f(0.0);
    }
    let n = 800;
    let (lo, hi) = (-8.0, 8.0);
    let h = (hi - lo) / n as f64;
    let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = 0.0;
    for i in 0..=n {
        let z = lo + i as f64 * h;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * pdf(z) * f(sd * z);
    }
    acc * h / 3.0
}

/// MSLE of the predictor that knows every latent effect, over the patients
/// in `ids` (all patients when `None`).
pub fn oracle_best_msle(truth: &GroundTruth, ids: Option<&[String]>) -> Result<f64> {
    let selected: Vec<&PatientTruth> = match ids {
        None => truth.patients.iter().collect(),
        Some(ids) => {
            let by_id: BTreeMap<&str, &PatientTruth> =
                truth.patients.iter().map(|p| (p.patient_id.as_str(), p)).collect();
            ids.iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| Error::Data(format!("patient {id} has no ground truth")))
                })
                .collect::<Result<_>>()?
        }
    };
    if selected.is_empty() {
        return Err(Error::Contract("oracle needs at least one patient".into()));
    }
    let total: f64 = selected
        .iter()
        .map(|p| {
            let best = expected_log1p_los(p.log_los_mean, truth.los_noise);
            (p.los.ln_1p() - best).powi(2)
        })
        .sum();
    Ok(total / selected.len() as f64)
}

/// Summary of generated leaf prevalence.
#[derive(Debug, Clone, PartialEq)]
pub struct PrevalenceSummary {
    pub leaves: usize,
    pub mean: f64,
    pub median: f64,
    pub max: usize,
}

impl PrevalenceSummary {
    /// Mean over median patients per diagnosis; above 1 for a right skew.
    pub fn skew_ratio(&self) -> f64 {
        self.mean / self.median
    }
}

/// Patients per leaf over leaves that occur at least once.
pub fn prevalence_summary(truth: &GroundTruth) -> PrevalenceSummary {
    let mut counts: Vec<usize> = truth.effects.iter().map(|e| e.count).filter(|&c| c > 0).collect();
    counts.sort_unstable();
    let n = counts.len();
    let median = if n == 0 {
        0.0
    } else if n % 2 == 1 {
        counts[n / 2] as f64
    } else {
        (counts[n / 2 - 1] + counts[n / 2]) as f64 / 2.0
    };
    PrevalenceSummary {
        leaves: n,
        mean: counts.iter().sum::<usize>() as f64 / n.max(1) as f64,
        median,
        max: counts.last().copied().unwrap_or(0),
    }
}
