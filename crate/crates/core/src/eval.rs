//! Reconstruction success rate, grasping-ability scoring and throughput
//! measurement.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::depth_io::DepthFrame;
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::pipeline::{FrameRecord, Pipeline};
use crate::simulator::{GripType, Manifest, VisibleObject};
use crate::Threading;

/// Centroid error bound for a successful reconstruction, in mm.
pub const DEFAULT_SUCCESS_THRESHOLD_MM: f64 = 20.0;

/// Wording used in reports to state how simulated success is judged.
pub const SUCCESS_CRITERION: &str =
    "target found, centroid error <= threshold, and the nearest ground-truth object is the intended target";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub frame_index: usize,
    pub target_found: bool,
    pub target_centroid: Option<Point3>,
    pub ground_truth_centroid: Option<Point3>,
    /// Present exactly when both centroids are.
    pub centroid_error: Option<f64>,
    /// Whether the predicted centroid is nearer the intended target than any
    /// other visible object. `None` without simulated ground truth.
    pub correct_object: Option<bool>,
    pub processing_ms: f64,
}

impl FrameResult {
    pub fn new(
        frame_index: usize,
        target_centroid: Option<Point3>,
        ground_truth_centroid: Option<Point3>,
        processing_ms: f64,
    ) -> Self {
        let centroid_error = match (target_centroid, ground_truth_centroid) {
            (Some(a), Some(b)) => Some((a - b).norm()),
            _ => None,
        };
        Self {
            frame_index,
            target_found: target_centroid.is_some(),
            target_centroid,
            ground_truth_centroid,
            centroid_error,
            correct_object: None,
            processing_ms,
        }
    }

    /// Scores a prediction against simulated ground truth for `target_id`.
    pub fn against_truth(
        frame_index: usize,
        predicted: Option<Point3>,
        truth: &[VisibleObject],
        target_id: u8,
        processing_ms: f64,
    ) -> Self {
        let target = truth.iter().find(|o| o.id == target_id).map(|o| o.centroid);
        let mut result = Self::new(frame_index, predicted, target, processing_ms);
        if let Some(p) = predicted {
            let nearest = truth.iter().min_by(|a, b| {
                a.centroid
                    .dist2(p)
                    .total_cmp(&b.centroid.dist2(p))
                    .then(a.id.cmp(&b.id))
            });
            result.correct_object = Some(nearest.is_some_and(|o| o.id == target_id));
        }
        result
    }

    pub fn is_success(&self, threshold_mm: f64) -> bool {
        self.target_found
            && self.centroid_error.is_some_and(|e| e <= threshold_mm)
            && self.correct_object != Some(false)
    }
}

/// Fraction of successful frames.
pub fn rsr(results: &[FrameResult], threshold_mm: f64) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::param("results", "RSR needs at least one frame"));
    }
    let ok = results
        .iter()
        .filter(|r| r.is_success(threshold_mm))
        .count();
    Ok(ok as f64 / results.len() as f64)
}

/// Scores run records against a simulated sequence. With `keyframes_only`
/// only the manifest keyframes are scored. Every scored frame needs a record
/// with a matching timestamp.
pub fn score_run(
    manifest: &Manifest,
    records: &[FrameRecord],
    keyframes_only: bool,
) -> Result<Vec<FrameResult>> {
    let by_time: BTreeMap<u64, &FrameRecord> = records.iter().map(|r| (r.timestamp, r)).collect();
    manifest
        .frames
        .iter()
        .filter(|f| !keyframes_only || f.keyframe)
        .map(|f| {
            let rec = by_time.get(&f.timestamp).ok_or_else(|| {
                Error::Schema(format!("no run record for frame timestamp {}", f.timestamp))
            })?;
            Ok(FrameResult::against_truth(
                f.index,
                rec.target,
                &f.ground_truth,
                manifest.target_id,
                0.0,
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RsrReport {
    pub threshold_mm: f64,
    pub frames: usize,
    pub successes: usize,
    pub rsr: f64,
}

impl RsrReport {
    pub fn new(results: &[FrameResult], threshold_mm: f64) -> Result<Self> {
        let rsr = rsr(results, threshold_mm)?;
        Ok(Self {
            threshold_mm,
            frames: results.len(),
            successes: results
                .iter()
                .filter(|r| r.is_success(threshold_mm))
                .count(),
            rsr,
        })
    }

    pub fn to_csv(&self) -> String {
        format!(
            "frames,successes,rsr_percent,threshold_mm\n{},{},{:.2},{}\n",
            self.frames,
            self.successes,
            self.rsr * 100.0,
            self.threshold_mm
        )
    }

    pub fn to_markdown(&self) -> String {
        format!(
            "| Frames | Successes | RSR (%) |\n|---:|---:|---:|\n| {} | {} | {:.2} |\n\nSuccess: {SUCCESS_CRITERION} (threshold {} mm).\n",
            self.frames,
            self.successes,
            self.rsr * 100.0,
            self.threshold_mm
        )
    }
}

/// A rating on the three-level 0 / 0.5 / 1 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub enum Score {
    Zero,
    Half,
    One,
}

impl Score {
    fn halves(self) -> i64 {
        match self {
            Score::Zero => 0,
            Score::Half => 1,
            Score::One => 2,
        }
    }

    pub fn value(self) -> Ratio<i64> {
        Ratio::new(self.halves(), 2)
    }
}

impl TryFrom<f64> for Score {
    type Error = String;

    fn try_from(v: f64) -> std::result::Result<Self, String> {
        match v {
            0.0 => Ok(Score::Zero),
            0.5 => Ok(Score::Half),
            1.0 => Ok(Score::One),
            other => Err(format!("score {other} is not one of 0, 0.5, 1")),
        }
    }
}

impl From<Score> for f64 {
    fn from(s: Score) -> f64 {
        s.halves() as f64 / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub object_id: String,
    #[serde(rename = "grasp_score")]
    pub grasp: Score,
    #[serde(rename = "maintain_score")]
    pub maintain: Score,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant: Option<String>,
}

/// An exact percentage, rounded half away from zero only when displayed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Percent(pub Ratio<i64>);

impl Percent {
    fn of_fraction(f: Ratio<i64>) -> Self {
        Percent(f * 100)
    }

    pub fn to_f64(self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }

    /// Decimal string with two places.
    pub fn to_fixed2(self) -> String {
        let scaled = self.0 * 100;
        let rounded = scaled.round().to_integer();
        let sign = if rounded < 0 { "-" } else { "" };
        let abs = rounded.abs();
        format!("{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl std::fmt::Display for Percent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_fixed2())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GripScores {
    pub grip: GripType,
    pub trials: usize,
    pub grasp: Percent,
    pub maintain: Percent,
    pub gas: Percent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GasReport {
    pub per_grip: Vec<GripScores>,
    /// Mean of the per-grip GAS values.
    pub overall_by_grip: Percent,
    /// Mean of the per-object GAS values.
    pub overall_by_object: Percent,
    /// Mean GAS over all trials pooled.
    pub overall_by_trial: Percent,
    /// Mean of per-participant GAS, when trials name participants.
    pub overall_by_participant: Option<Percent>,
}

fn mean(values: &[Ratio<i64>]) -> Ratio<i64> {
    values.iter().copied().sum::<Ratio<i64>>() / values.len() as i64
}

/// Grasp and maintain means of a trial group, as fractions.
fn component_means(trials: &[&TrialRecord]) -> (Ratio<i64>, Ratio<i64>) {
    let n = trials.len() as i64;
    let grasp: i64 = trials.iter().map(|t| t.grasp.halves()).sum();
    let maintain: i64 = trials.iter().map(|t| t.maintain.halves()).sum();
    (Ratio::new(grasp, 2 * n), Ratio::new(maintain, 2 * n))
}

fn group_gas<K: Ord>(trials: &[TrialRecord], key: impl Fn(&TrialRecord) -> K) -> Vec<Ratio<i64>> {
    let mut groups: BTreeMap<K, Vec<&TrialRecord>> = BTreeMap::new();
    for t in trials {
        groups.entry(key(t)).or_default().push(t);
    }
    groups
        .values()
        .map(|g| {
            let (grasp, maintain) = component_means(g);
            (grasp + maintain) / 2
        })
        .collect()
}

/// Per grip type: grasp% and maintain% are mean scores × 100 and GAS% is
/// their mean. The overall figure averages grip types; the object-, trial-
/// and participant-level alternatives are reported alongside.
pub fn gas(trials: &[TrialRecord], grip_map: &BTreeMap<String, GripType>) -> Result<GasReport> {
    if trials.is_empty() {
        return Err(Error::Schema("trial ledger is empty".into()));
    }
    let mut by_grip: BTreeMap<GripType, Vec<&TrialRecord>> = BTreeMap::new();
    for t in trials {
        let grip = grip_map.get(&t.object_id).ok_or_else(|| {
            Error::Schema(format!("object `{}` has no grip type mapping", t.object_id))
        })?;
        by_grip.entry(*grip).or_default().push(t);
    }
    let per_grip: Vec<GripScores> = by_grip
        .iter()
        .map(|(&grip, group)| {
            let (grasp, maintain) = component_means(group);
            GripScores {
                grip,
                trials: group.len(),
                grasp: Percent::of_fraction(grasp),
                maintain: Percent::of_fraction(maintain),
                gas: Percent::of_fraction((grasp + maintain) / 2),
            }
        })
        .collect();
    let grip_gas: Vec<Ratio<i64>> = per_grip.iter().map(|g| g.gas.0 / 100).collect();
    let all: Vec<&TrialRecord> = trials.iter().collect();
    let (grasp_all, maintain_all) = component_means(&all);
    let with_participant: Vec<TrialRecord> = trials
        .iter()
        .filter(|t| t.participant.is_some())
        .cloned()
        .collect();
    let overall_by_participant = (with_participant.len() == trials.len())
        .then(|| Percent::of_fraction(mean(&group_gas(trials, |t| t.participant.clone()))));
    Ok(GasReport {
        per_grip,
        overall_by_grip: Percent::of_fraction(mean(&grip_gas)),
        overall_by_object: Percent::of_fraction(mean(&group_gas(trials, |t| t.object_id.clone()))),
        overall_by_trial: Percent::of_fraction((grasp_all + maintain_all) / 2),
        overall_by_participant,
    })
}

impl GasReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("grip,trials,grasp_percent,maintain_percent,gas_percent\n");
        for g in &self.per_grip {
            out += &format!(
                "{},{},{},{},{}\n",
                g.grip, g.trials, g.grasp, g.maintain, g.gas
            );
        }
        out += &format!("overall_by_grip,,,,{}\n", self.overall_by_grip);
        out += &format!("overall_by_object,,,,{}\n", self.overall_by_object);
        out += &format!("overall_by_trial,,,,{}\n", self.overall_by_trial);
        if let Some(p) = self.overall_by_participant {
            out += &format!("overall_by_participant,,,,{p}\n");
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| Grip | Trials | Grasp (%) | Maintain (%) | GAS (%) |\n|---|---:|---:|---:|---:|\n",
        );
        for g in &self.per_grip {
            out += &format!(
                "| {} | {} | {} | {} | {} |\n",
                g.grip, g.trials, g.grasp, g.maintain, g.gas
            );
        }
        out += &format!(
            "\nOverall GAS, mean over grip types: {}%\n",
            self.overall_by_grip
        );
        out += &format!(
            "Overall GAS, mean over objects: {}%\n",
            self.overall_by_object
        );
        out += &format!(
            "Overall GAS, pooled over trials: {}%\n",
            self.overall_by_trial
        );
        if let Some(p) = self.overall_by_participant {
            out += &format!("Overall GAS, mean over participants: {p}%\n");
        }
        out
    }
}

/// Reads a trial ledger with columns `object_id, grasp_score,
/// maintain_score` and an optional `participant`.
pub fn read_trials(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    reader
        .deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Schema(format!("{}: row {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Schema(format!("{}: {other:?}", path.display())),
    }
}

/// Reads an object-to-grip map, either JSON (`{"cup": "cylindrical"}`) or
/// CSV with columns `object_id, grip`.
pub fn read_grip_map(path: impl AsRef<Path>) -> Result<BTreeMap<String, GripType>> {
    let path = path.as_ref();
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
    {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: BTreeMap<String, String> =
            serde_json::from_str(&text).map_err(|e| Error::Json {
                path: path.to_path_buf(),
                source: e,
            })?;
        return raw.into_iter().map(|(k, v)| Ok((k, v.parse()?))).collect();
    }
    #[derive(Deserialize)]
    struct Row {
        object_id: String,
        grip: String,
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut map = BTreeMap::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        map.insert(row.object_id, row.grip.parse()?);
    }
    Ok(map)
}

/// Frames-per-second statistics over measured frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpsStats {
    pub median: f64,
    pub mean: f64,
    /// Sample standard deviation of per-frame fps.
    pub std: f64,
    pub frames: usize,
    pub frame_ms: Vec<f64>,
}

impl FpsStats {
    pub fn from_durations_ms(frame_ms: Vec<f64>) -> Self {
        let fps: Vec<f64> = frame_ms.iter().map(|ms| 1000.0 / ms).collect();
        let n = fps.len() as f64;
        let mean = fps.iter().sum::<f64>() / n;
        let var = if fps.len() > 1 {
            fps.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let mut sorted = fps.clone();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len().is_multiple_of(2) {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        } else {
            sorted[mid]
        };
        Self {
            median,
            mean,
            std: var.sqrt(),
            frames: frame_ms.len(),
            frame_ms,
        }
    }
}

/// Minimum number of frames measured after warmup.
pub const MIN_MEASURED_FRAMES: usize = 10;

/// Times `process` on each frame. The first `warmup` calls are not measured.
pub fn benchmark_with<F>(frames: &[DepthFrame], warmup: usize, mut process: F) -> Result<FpsStats>
where
    F: FnMut(&DepthFrame) -> Result<()>,
{
    let available = frames.len().saturating_sub(warmup);
    if available < MIN_MEASURED_FRAMES {
        return Err(Error::InsufficientFrames {
            needed: MIN_MEASURED_FRAMES,
            available,
        });
    }
    for f in &frames[..warmup] {
        process(f)?;
    }
    let mut ms = Vec::with_capacity(available);
    for f in &frames[warmup..] {
        let start = Instant::now();
        process(f)?;
        ms.push(start.elapsed().as_secs_f64() * 1000.0);
    }
    Ok(FpsStats::from_durations_ms(ms))
}

/// End-to-end throughput of the pipeline, backprojection through the
/// control step, with frames already in memory.
pub fn benchmark(
    cfg: &PipelineConfig,
    frames: &[DepthFrame],
    warmup: usize,
    threading: Threading,
) -> Result<FpsStats> {
    let mut pipeline = Pipeline::new(PipelineConfig { threading, ..*cfg })?;
    benchmark_with(frames, warmup, |f| pipeline.process(f).map(|_| ()))
}
