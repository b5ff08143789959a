//! Trial data model, on-disk loaders, and the synthetic trial generator.
//!
//! A dataset root holds one folder per task, each with `kinematics/`,
//! `transcriptions/`, and a `meta.csv` enumerating trials with their
//! skill labels. Kinematics files carry one frame per line with exactly
//! `D` whitespace-separated reals; transcript files carry
//! `<start> <end> <Gk>` rows with 1-based inclusive frame ranges. The
//! per-row kinematics/transcript file name is `<surgeon>_<trial>.txt`.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::distributions::Uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by loaders, validators, and the synthetic generator.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("kinematics stream has fewer than 2 frames")]
    EmptyFile,
    #[error("line {line}: unknown gesture id `{token}`")]
    UnknownGesture { line: usize, token: String },
    #[error("transcript segments overlap: [{a_start}, {a_end}) and [{b_start}, {b_end})")]
    OverlapError {
        a_start: usize,
        a_end: usize,
        b_start: usize,
        b_end: usize,
    },
    #[error("missing meta file {0}")]
    MissingMeta(PathBuf),
    #[error("trial {trial}: missing kinematics file {path}")]
    MissingKinematics { trial: String, path: PathBuf },
    #[error("trial {trial}: GRS {grs} does not equal the OSATS sum {sum}")]
    LabelInconsistency { trial: String, grs: i32, sum: i32 },
    #[error("duplicate trial {0}")]
    DuplicateTrial(String),
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The three dry-lab training tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    Suturing,
    KnotTying,
    NeedlePassing,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Suturing, Task::KnotTying, Task::NeedlePassing];

    pub fn parse(s: &str) -> Result<Task, DataError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "suturing" => Ok(Task::Suturing),
            "knottying" | "knot_tying" | "knot-tying" => Ok(Task::KnotTying),
            "needlepassing" | "needle_passing" | "needle-passing" => Ok(Task::NeedlePassing),
            other => Err(DataError::BadParam(format!("unknown task `{other}`"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Suturing => "Suturing",
            Task::KnotTying => "KnotTying",
            Task::NeedlePassing => "NeedlePassing",
        })
    }
}

/// Self-proclaimed experience bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SkillLevel {
    Novice,
    Intermediate,
    Expert,
}

impl SkillLevel {
    pub fn parse(s: &str) -> Result<SkillLevel, DataError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "novice" | "n" => Ok(SkillLevel::Novice),
            "intermediate" | "i" => Ok(SkillLevel::Intermediate),
            "expert" | "e" => Ok(SkillLevel::Expert),
            other => Err(DataError::BadParam(format!("unknown skill level `{other}`"))),
        }
    }
}

impl fmt::Display for SkillLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkillLevel::Novice => "Novice",
            SkillLevel::Intermediate => "Intermediate",
            SkillLevel::Expert => "Expert",
        })
    }
}

/// The six modified-OSATS grading criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OsatsCriterion {
    /// Respect for tissue.
    Rt,
    /// Time and motion.
    Tm,
    /// Flow of operation.
    Fo,
    /// Overall performance.
    Op,
    /// Quality of final product.
    Qp,
    /// Suture handling.
    Sh,
}

impl OsatsCriterion {
    pub const ALL: [OsatsCriterion; 6] = [
        OsatsCriterion::Rt,
        OsatsCriterion::Tm,
        OsatsCriterion::Fo,
        OsatsCriterion::Op,
        OsatsCriterion::Qp,
        OsatsCriterion::Sh,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|c| *c == self).unwrap()
    }
}

impl fmt::Display for OsatsCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OsatsCriterion::Rt => "RT",
            OsatsCriterion::Tm => "TM",
            OsatsCriterion::Fo => "FO",
            OsatsCriterion::Op => "OP",
            OsatsCriterion::Qp => "QP",
            OsatsCriterion::Sh => "SH",
        })
    }
}

/// A score a regressor can target: one OSATS criterion or the GRS sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScoreTarget {
    Osats(OsatsCriterion),
    Grs,
}

impl ScoreTarget {
    pub const ALL: [ScoreTarget; 7] = [
        ScoreTarget::Osats(OsatsCriterion::Rt),
        ScoreTarget::Osats(OsatsCriterion::Tm),
        ScoreTarget::Osats(OsatsCriterion::Fo),
        ScoreTarget::Osats(OsatsCriterion::Op),
        ScoreTarget::Osats(OsatsCriterion::Qp),
        ScoreTarget::Osats(OsatsCriterion::Sh),
        ScoreTarget::Grs,
    ];

    pub fn parse(s: &str) -> Result<ScoreTarget, DataError> {
        let t = s.trim().to_ascii_uppercase();
        for target in Self::ALL {
            if target.to_string() == t {
                return Ok(target);
            }
        }
        Err(DataError::BadParam(format!("unknown score target `{s}`")))
    }
}

impl fmt::Display for ScoreTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreTarget::Osats(c) => c.fmt(f),
            ScoreTarget::Grs => f.write_str("GRS"),
        }
    }
}

/// Six modified-OSATS integers, each in [1, 5], keyed by criterion order
/// RT, TM, FO, OP, QP, SH.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OsatsScores([i32; 6]);

impl OsatsScores {
    pub fn new(values: [i32; 6]) -> Result<Self, DataError> {
        for (c, v) in OsatsCriterion::ALL.iter().zip(values) {
            if !(1..=5).contains(&v) {
                return Err(DataError::BadParam(format!(
                    "OSATS {c} score {v} outside [1, 5]"
                )));
            }
        }
        Ok(OsatsScores(values))
    }

    pub fn get(&self, criterion: OsatsCriterion) -> i32 {
        self.0[criterion.index()]
    }

    pub fn sum(&self) -> i32 {
        self.0.iter().sum()
    }

    pub fn values(&self) -> [i32; 6] {
        self.0
    }
}

/// Ground-truth labels for one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillLabels {
    pub self_proclaimed: SkillLevel,
    pub osats: OsatsScores,
    pub grs: i32,
}

impl SkillLabels {
    /// Fails loudly when `grs` disagrees with the OSATS sum instead of
    /// silently recomputing it.
    pub fn new(
        self_proclaimed: SkillLevel,
        osats: OsatsScores,
        grs: i32,
        trial: &str,
    ) -> Result<Self, DataError> {
        let sum = osats.sum();
        if grs != sum {
            return Err(DataError::LabelInconsistency {
                trial: trial.to_string(),
                grs,
                sum,
            });
        }
        Ok(SkillLabels {
            self_proclaimed,
            osats,
            grs,
        })
    }

    pub fn score(&self, target: ScoreTarget) -> f64 {
        match target {
            ScoreTarget::Osats(c) => self.osats.get(c) as f64,
            ScoreTarget::Grs => self.grs as f64,
        }
    }
}

/// One of the 15 atomic surgical motion units, G1..G15.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GestureId(u8);

impl GestureId {
    pub fn new(id: u8) -> Option<GestureId> {
        (1..=15).contains(&id).then_some(GestureId(id))
    }

    pub fn number(self) -> u8 {
        self.0
    }

    pub fn parse(token: &str) -> Option<GestureId> {
        let rest = token.strip_prefix('G')?;
        rest.parse::<u8>().ok().and_then(GestureId::new)
    }
}

impl fmt::Display for GestureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "G{}", self.0)
    }
}

/// A gesture-labeled frame range, 0-based half-open `[start_frame, end_frame)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GestureSegment {
    pub gesture: GestureId,
    pub start_frame: usize,
    pub end_frame: usize,
}

pub const DEFAULT_FRAME_RATE: f64 = 30.0;

/// A D-channel, L-frame trial recording. Rows are channels.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicSeries {
    channels: Vec<Vec<f64>>,
    pub frame_rate: f64,
    pub channel_names: Vec<String>,
}

impl KinematicSeries {
    /// Builds a series from channel rows, validating D >= 1, L >= 2,
    /// equal row lengths, and finiteness of every entry.
    pub fn new(channels: Vec<Vec<f64>>, frame_rate: f64) -> Result<Self, DataError> {
        if channels.is_empty() {
            return Err(DataError::BadParam("series needs at least one channel".into()));
        }
        let len = channels[0].len();
        if len < 2 {
            return Err(DataError::EmptyFile);
        }
        for (d, row) in channels.iter().enumerate() {
            if row.len() != len {
                return Err(DataError::BadParam(format!(
                    "channel {d} has {} frames, expected {len}",
                    row.len()
                )));
            }
            if let Some(col) = row.iter().position(|v| !v.is_finite()) {
                return Err(DataError::BadParam(format!(
                    "non-finite value at channel {d}, frame {col}"
                )));
            }
        }
        let channel_names = (0..channels.len()).map(|d| format!("ch{d:02}")).collect();
        Ok(KinematicSeries {
            channels,
            frame_rate,
            channel_names,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_frames(&self) -> usize {
        self.channels[0].len()
    }

    pub fn channel(&self, d: usize) -> &[f64] {
        &self.channels[d]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }
}

/// One recorded trial with identity, labels, and optional transcript.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub surgeon_id: String,
    pub task: Task,
    pub trial_index: u32,
    pub series: KinematicSeries,
    pub labels: SkillLabels,
    pub transcript: Option<Vec<GestureSegment>>,
}

impl TrialRecord {
    /// Stable identity string `surgeon/task/trial`.
    pub fn id(&self) -> String {
        format!("{}/{}/{}", self.surgeon_id, self.task, self.trial_index)
    }
}

/// A set of trials with unique (surgeon, task, trial) identities.
#[derive(Debug, Clone)]
pub struct Dataset {
    trials: Vec<TrialRecord>,
    pub task_filter: Option<Task>,
}

impl Dataset {
    pub fn new(trials: Vec<TrialRecord>, task_filter: Option<Task>) -> Result<Self, DataError> {
        let mut seen = HashSet::new();
        for t in &trials {
            if !seen.insert((t.surgeon_id.clone(), t.task, t.trial_index)) {
                return Err(DataError::DuplicateTrial(t.id()));
            }
        }
        Ok(Dataset { trials, task_filter })
    }

    pub fn trials(&self) -> &[TrialRecord] {
        &self.trials
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Sorted distinct surgeon ids.
    pub fn surgeons(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .trials
            .iter()
            .map(|t| t.surgeon_id.clone())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        ids.sort();
        ids
    }

    /// New dataset holding only trials of `task`.
    pub fn filter_task(&self, task: Task) -> Dataset {
        Dataset {
            trials: self
                .trials
                .iter()
                .filter(|t| t.task == task)
                .cloned()
                .collect(),
            task_filter: Some(task),
        }
    }
}

/// Parses a kinematics stream: one frame per line, exactly `expected_dims`
/// whitespace-separated finite reals. Returns channels as rows.
pub fn load_kinematics<R: BufRead>(
    reader: R,
    expected_dims: usize,
) -> Result<KinematicSeries, DataError> {
    if expected_dims == 0 {
        return Err(DataError::BadParam("expected_dims must be >= 1".into()));
    }
    let mut channels: Vec<Vec<f64>> = vec![Vec::new(); expected_dims];
    let mut frames = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let mut count = 0usize;
        for token in trimmed.split_whitespace() {
            let value: f64 = token.parse().map_err(|_| DataError::MalformedRow {
                line: lineno,
                reason: format!("non-numeric token `{token}`"),
            })?;
            if !value.is_finite() {
                return Err(DataError::MalformedRow {
                    line: lineno,
                    reason: format!("non-finite value `{token}`"),
                });
            }
            if count < expected_dims {
                channels[count].push(value);
            }
            count += 1;
        }
        if count != expected_dims {
            // roll back the partial frame so earlier channels stay aligned
            for ch in channels.iter_mut() {
                ch.truncate(frames);
            }
            return Err(DataError::MalformedRow {
                line: lineno,
                reason: format!("expected {expected_dims} columns, found {count}"),
            });
        }
        frames += 1;
    }
    if frames < 2 {
        return Err(DataError::EmptyFile);
    }
    KinematicSeries::new(channels, DEFAULT_FRAME_RATE)
}

/// Writes the text form `load_kinematics` reads, at 12 significant digits.
pub fn write_kinematics<W: Write>(series: &KinematicSeries, mut writer: W) -> std::io::Result<()> {
    let (d, l) = (series.n_channels(), series.n_frames());
    for frame in 0..l {
        for ch in 0..d {
            if ch > 0 {
                writer.write_all(b" ")?;
            }
            write!(writer, "{:.11e}", series.channel(ch)[frame])?;
        }
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses `<start> <end> <Gk>` transcript rows (1-based inclusive frames)
/// into sorted, non-overlapping 0-based half-open segments.
pub fn load_transcript<R: BufRead>(reader: R) -> Result<Vec<GestureSegment>, DataError> {
    let mut segments = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(DataError::MalformedRow {
                line: lineno,
                reason: format!(
                    "expected `<start> <end> <gesture>`, found {} fields",
                    fields.len()
                ),
            });
        }
        let start: usize = fields[0].parse().map_err(|_| DataError::MalformedRow {
            line: lineno,
            reason: format!("bad start frame `{}`", fields[0]),
        })?;
        let end: usize = fields[1].parse().map_err(|_| DataError::MalformedRow {
            line: lineno,
            reason: format!("bad end frame `{}`", fields[1]),
        })?;
        if start < 1 || end < start {
            return Err(DataError::MalformedRow {
                line: lineno,
                reason: format!("bad frame range {start}..{end}"),
            });
        }
        let gesture = GestureId::parse(fields[2]).ok_or_else(|| DataError::UnknownGesture {
            line: lineno,
            token: fields[2].to_string(),
        })?;
        segments.push(GestureSegment {
            gesture,
            start_frame: start - 1,
            end_frame: end,
        });
    }
    segments.sort_by_key(|s| (s.start_frame, s.end_frame));
    for pair in segments.windows(2) {
        if pair[1].start_frame < pair[0].end_frame {
            return Err(DataError::OverlapError {
                a_start: pair[0].start_frame,
                a_end: pair[0].end_frame,
                b_start: pair[1].start_frame,
                b_end: pair[1].end_frame,
            });
        }
    }
    Ok(segments)
}

const META_HEADER: &str = "surgeon,task,trial,level,RT,TM,FO,OP,QP,SH,GRS";

/// Loads one task's trials from `root/<task>/`: `meta.csv` rows plus the
/// kinematics (required) and transcript (optional) file per row.
pub fn load_dataset(root: &Path, task: Task) -> Result<Dataset, DataError> {
    let task_dir = root.join(task.to_string());
    let meta_path = task_dir.join("meta.csv");
    if !meta_path.is_file() {
        return Err(DataError::MissingMeta(meta_path));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(&meta_path)
        .map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    let expected: Vec<&str> = META_HEADER.split(',').collect();
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(DataError::MalformedRow {
            line: 1,
            reason: format!("meta header must be `{META_HEADER}`"),
        });
    }

    let mut trials = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let lineno = idx + 2;
        let field = |i: usize| -> Result<&str, DataError> {
            record.get(i).ok_or(DataError::MalformedRow {
                line: lineno,
                reason: "short meta row".into(),
            })
        };
        let surgeon = field(0)?.to_string();
        let row_task = Task::parse(field(1)?)?;
        if row_task != task {
            return Err(DataError::MalformedRow {
                line: lineno,
                reason: format!("meta row for task {row_task} inside {task} folder"),
            });
        }
        let trial_index: u32 = field(2)?.parse().map_err(|_| DataError::MalformedRow {
            line: lineno,
            reason: format!("bad trial index `{}`", field(2).unwrap_or("")),
        })?;
        let level = SkillLevel::parse(field(3)?)?;
        let mut osats = [0i32; 6];
        for (j, slot) in osats.iter_mut().enumerate() {
            *slot = field(4 + j)?.parse().map_err(|_| DataError::MalformedRow {
                line: lineno,
                reason: format!("bad OSATS value `{}`", field(4 + j).unwrap_or("")),
            })?;
        }
        let grs: i32 = field(10)?.parse().map_err(|_| DataError::MalformedRow {
            line: lineno,
            reason: format!("bad GRS value `{}`", field(10).unwrap_or("")),
        })?;
        let trial_tag = format!("{surgeon}/{task}/{trial_index}");
        let labels = SkillLabels::new(level, OsatsScores::new(osats)?, grs, &trial_tag)?;

        let stem = format!("{surgeon}_{trial_index}.txt");
        let kin_path = task_dir.join("kinematics").join(&stem);
        if !kin_path.is_file() {
            return Err(DataError::MissingKinematics {
                trial: trial_tag,
                path: kin_path,
            });
        }
        let dims = sniff_dims(&kin_path)?;
        let series = load_kinematics(BufReader::new(std::fs::File::open(&kin_path)?), dims)?;

        let tr_path = task_dir.join("transcriptions").join(&stem);
        let transcript = if tr_path.is_file() {
            Some(load_transcript(BufReader::new(std::fs::File::open(&tr_path)?))?)
        } else {
            None
        };

        trials.push(TrialRecord {
            surgeon_id: surgeon,
            task,
            trial_index,
            series,
            labels,
            transcript,
        });
    }
    Dataset::new(trials, Some(task))
}

fn csv_err(e: csv::Error) -> DataError {
    DataError::MalformedRow {
        line: 0,
        reason: e.to_string(),
    }
}

/// Column count of the first non-empty line; all columns present are ingested.
fn sniff_dims(path: &Path) -> Result<usize, DataError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    for line in reader.lines() {
        let line = line?;
        let n = line.split_whitespace().count();
        if n > 0 {
            return Ok(n);
        }
    }
    Err(DataError::EmptyFile)
}

/// Writes `dataset` under `root` in the layout `load_dataset` reads.
pub fn write_dataset(dataset: &Dataset, root: &Path) -> Result<(), DataError> {
    for task in Task::ALL {
        let trials: Vec<&TrialRecord> =
            dataset.trials().iter().filter(|t| t.task == task).collect();
        if trials.is_empty() {
            continue;
        }
        let task_dir = root.join(task.to_string());
        std::fs::create_dir_all(task_dir.join("kinematics"))?;
        std::fs::create_dir_all(task_dir.join("transcriptions"))?;
        let mut meta = String::from(META_HEADER);
        meta.push('\n');
        for t in &trials {
            let v = t.labels.osats.values();
            meta.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                t.surgeon_id,
                t.task,
                t.trial_index,
                t.labels.self_proclaimed,
                v[0],
                v[1],
                v[2],
                v[3],
                v[4],
                v[5],
                t.labels.grs
            ));
            let stem = format!("{}_{}.txt", t.surgeon_id, t.trial_index);
            let mut kin = std::fs::File::create(task_dir.join("kinematics").join(&stem))?;
            write_kinematics(&t.series, &mut kin)?;
            if let Some(segments) = &t.transcript {
                let mut out = String::new();
                for s in segments {
                    out.push_str(&format!(
                        "{} {} {}\n",
                        s.start_frame + 1,
                        s.end_frame,
                        s.gesture
                    ));
                }
                std::fs::write(task_dir.join("transcriptions").join(&stem), out)?;
            }
        }
        std::fs::write(task_dir.join("meta.csv"), meta)?;
    }
    Ok(())
}

const SYNTH_COMPONENTS: usize = 3;
const SYNTH_NOISE_SCALE: f64 = 0.8;
pub const SYNTH_MIN_FRAMES: usize = 200;

/// 64-bit FNV-1a over a word stream; the documented seed-derivation mixer.
pub(crate) fn fnv1a(parts: &[u64]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for p in parts {
        for b in p.to_le_bytes() {
            hash ^= b as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
    }
    hash
}

/// Monotone quantization of `skill` in [0, 1] onto the 1..5 score scale.
fn quantize_score(skill: f64) -> i32 {
    1 + ((skill * 5.0).floor() as i32).min(4)
}

fn quantize_level(skill: f64) -> SkillLevel {
    if skill < 1.0 / 3.0 {
        SkillLevel::Novice
    } else if skill < 2.0 / 3.0 {
        SkillLevel::Intermediate
    } else {
        SkillLevel::Expert
    }
}

/// Labels implied by a latent skill value: staggered monotone quantization
/// per criterion, GRS as the sum.
pub fn synth_labels(skill: f64) -> SkillLabels {
    let mut osats = [0i32; 6];
    for (j, slot) in osats.iter_mut().enumerate() {
        *slot = quantize_score((skill + 0.03 * j as f64).min(1.0));
    }
    let osats = OsatsScores::new(osats).expect("quantized scores stay in range");
    SkillLabels {
        self_proclaimed: quantize_level(skill),
        osats,
        grs: osats.sum(),
    }
}

/// Generates one skill-graded synthetic trial.
///
/// Every channel is a sum of three low-frequency sinusoids (1 to 6
/// cycles per trial, aligned to the half-sample cosine grid so that
/// noiseless trials are exactly band-limited) plus white noise whose
/// amplitude scales with `1 - skill`. The sinusoid template (frequency
/// indices, signs, base amplitudes) depends only on
/// `(task, n_channels)` so trials generated with different seeds stay
/// comparable, while `seed` drives the noise. Sinusoid amplitude grows
/// with skill, so higher skill means smoother, more periodic signals.
pub fn synth_trial(
    skill: f64,
    task: Task,
    n_channels: usize,
    n_frames: usize,
    seed: u64,
) -> Result<TrialRecord, DataError> {
    if !(0.0..=1.0).contains(&skill) {
        return Err(DataError::BadParam(format!("skill {skill} outside [0, 1]")));
    }
    if n_channels == 0 {
        return Err(DataError::BadParam("n_channels must be >= 1".into()));
    }
    if n_frames < SYNTH_MIN_FRAMES {
        return Err(DataError::BadParam(format!(
            "n_frames {n_frames} below the {SYNTH_MIN_FRAMES}-frame minimum"
        )));
    }

    let mut template = ChaCha8Rng::seed_from_u64(fnv1a(&[task as u64, n_channels as u64]));
    let amp_dist = Uniform::new(0.6, 1.4);

    let mut noise_rng = ChaCha8Rng::seed_from_u64(fnv1a(&[
        seed,
        skill.to_bits(),
        task as u64,
        n_channels as u64,
        n_frames as u64,
    ]));
    let noise_amp = SYNTH_NOISE_SCALE * (1.0 - skill);
    let sin_gain = 0.5 + skill;

    let l = n_frames as f64;
    let mut channels = Vec::with_capacity(n_channels);
    for _ in 0..n_channels {
        // distinct half-cycle indices 2..=12, i.e. 1..6 cycles per trial
        let mut indices: Vec<usize> = (2..=12).collect();
        for i in 0..SYNTH_COMPONENTS {
            let j = template.gen_range(i..indices.len());
            indices.swap(i, j);
        }
        let comps: Vec<(usize, f64)> = indices[..SYNTH_COMPONENTS]
            .iter()
            .map(|&k| {
                let amp = template.sample(amp_dist);
                let sign = if template.gen_bool(0.5) { 1.0 } else { -1.0 };
                (k, sign * amp)
            })
            .collect();
        let mut row = Vec::with_capacity(n_frames);
        for t in 0..n_frames {
            let mut v = 0.0;
            for &(k, amp) in &comps {
                v += amp
                    * sin_gain
                    * (std::f64::consts::PI * k as f64 * (t as f64 + 0.5) / l).cos();
            }
            let eps: f64 = noise_rng.sample(StandardNormal);
            row.push(v + noise_amp * eps);
        }
        channels.push(row);
    }

    Ok(TrialRecord {
        surgeon_id: format!("synth-{seed:08x}"),
        task,
        trial_index: 1,
        series: KinematicSeries::new(channels, DEFAULT_FRAME_RATE)?,
        labels: synth_labels(skill),
        transcript: None,
    })
}

/// Builds a skill-graded synthetic dataset: surgeon `i` gets base skill
/// `(i + 0.5) / n_surgeons`, each trial jitters it by at most ±0.015, and
/// per-trial seeds derive from `seed` via the FNV mixer.
pub fn synth_dataset(
    n_surgeons: usize,
    trials_per_surgeon: usize,
    task: Task,
    n_channels: usize,
    n_frames: usize,
    seed: u64,
) -> Result<Dataset, DataError> {
    if n_surgeons == 0 || trials_per_surgeon == 0 {
        return Err(DataError::BadParam(
            "need at least one surgeon and one trial".into(),
        ));
    }
    let mut trials = Vec::with_capacity(n_surgeons * trials_per_surgeon);
    for i in 0..n_surgeons {
        let base = (i as f64 + 0.5) / n_surgeons as f64;
        for t in 1..=trials_per_surgeon {
            let trial_seed = fnv1a(&[seed, i as u64, t as u64]);
            let mut jitter_rng = ChaCha8Rng::seed_from_u64(fnv1a(&[trial_seed, 1]));
            let jitter: f64 = jitter_rng.sample(Uniform::new(-0.015, 0.015));
            let skill = (base + jitter).clamp(0.0, 1.0);
            let mut trial = synth_trial(skill, task, n_channels, n_frames, trial_seed)?;
            trial.surgeon_id = format!("S{i}");
            trial.trial_index = t as u32;
            trials.push(trial);
        }
    }
    Dataset::new(trials, Some(task))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn kinematics_zero_case() {
        let line = vec!["0.0"; 76].join(" ");
        let text = format!("{line}\n{line}\n{line}\n");
        let s = load_kinematics(Cursor::new(text), 76).unwrap();
        assert_eq!(s.n_channels(), 76);
        assert_eq!(s.n_frames(), 3);
        assert!(s.channels().iter().all(|row| row.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn kinematics_short_row_rejected() {
        let good = vec!["1.0"; 76].join(" ");
        let bad = vec!["1.0"; 75].join(" ");
        let text = format!("{good}\n{bad}\n{good}\n");
        match load_kinematics(Cursor::new(text), 76) {
            Err(DataError::MalformedRow { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected MalformedRow, got {other:?}"),
        }
    }

    #[test]
    fn kinematics_transposes_to_channels() {
        let s = load_kinematics(Cursor::new("1 2\n3 4\n5 6\n"), 2).unwrap();
        assert_eq!(s.channel(0), &[1.0, 3.0, 5.0]);
        assert_eq!(s.channel(1), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn kinematics_rejects_non_numeric_and_non_finite() {
        assert!(matches!(
            load_kinematics(Cursor::new("1 x\n2 3\n"), 2),
            Err(DataError::MalformedRow { line: 1, .. })
        ));
        assert!(matches!(
            load_kinematics(Cursor::new("1 2\n3 inf\n"), 2),
            Err(DataError::MalformedRow { line: 2, .. })
        ));
    }

    #[test]
    fn kinematics_single_frame_is_empty() {
        assert!(matches!(
            load_kinematics(Cursor::new("1 2\n"), 2),
            Err(DataError::EmptyFile)
        ));
    }

    #[test]
    fn kinematics_round_trip_12_digits() {
        let channels = vec![
            vec![1.0, -2.5e-7, 3.25e11, 0.1],
            vec![-0.333333333333, 7.0, 1e-300, 2.0],
        ];
        let s = KinematicSeries::new(channels, DEFAULT_FRAME_RATE).unwrap();
        let mut buf = Vec::new();
        write_kinematics(&s, &mut buf).unwrap();
        let round = load_kinematics(Cursor::new(buf), 2).unwrap();
        for d in 0..2 {
            for (a, b) in s.channel(d).iter().zip(round.channel(d)) {
                let tol = 1e-11 * a.abs().max(1e-300);
                assert!((a - b).abs() <= tol, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn transcript_sorted_and_validated() {
        let segs = load_transcript(Cursor::new("81 190 G5\n1 80 G1\n")).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].gesture, GestureId::new(1).unwrap());
        assert_eq!((segs[0].start_frame, segs[0].end_frame), (0, 80));
        assert_eq!((segs[1].start_frame, segs[1].end_frame), (80, 190));
    }

    #[test]
    fn transcript_unknown_gesture() {
        assert!(matches!(
            load_transcript(Cursor::new("1 80 G99\n")),
            Err(DataError::UnknownGesture { line: 1, .. })
        ));
    }

    #[test]
    fn transcript_overlap() {
        assert!(matches!(
            load_transcript(Cursor::new("1 80 G1\n50 120 G2\n")),
            Err(DataError::OverlapError { .. })
        ));
    }

    #[test]
    fn labels_reject_grs_mismatch() {
        let osats = OsatsScores::new([3, 4, 3, 4, 3, 4]).unwrap();
        assert!(SkillLabels::new(SkillLevel::Expert, osats, 21, "t").is_ok());
        assert!(matches!(
            SkillLabels::new(SkillLevel::Expert, osats, 20, "t"),
            Err(DataError::LabelInconsistency { grs: 20, sum: 21, .. })
        ));
    }

    #[test]
    fn dataset_rejects_duplicate_triples() {
        let t = synth_trial(0.5, Task::Suturing, 2, 200, 9).unwrap();
        let dup = t.clone();
        assert!(matches!(
            Dataset::new(vec![t, dup], None),
            Err(DataError::DuplicateTrial(_))
        ));
    }

    #[test]
    fn synth_is_deterministic() {
        let a = synth_trial(0.4, Task::KnotTying, 3, 250, 7).unwrap();
        let b = synth_trial(0.4, Task::KnotTying, 3, 250, 7).unwrap();
        assert_eq!(a.series, b.series);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn synth_full_skill_is_noiseless() {
        // Noise term is exactly zero at skill 1, so the signal must be
        // identical across seeds (the template ignores the seed).
        let a = synth_trial(1.0, Task::Suturing, 2, 220, 1).unwrap();
        let b = synth_trial(1.0, Task::Suturing, 2, 220, 2).unwrap();
        assert_eq!(a.series, b.series);
    }

    #[test]
    fn synth_rejects_bad_params() {
        assert!(matches!(
            synth_trial(1.5, Task::Suturing, 2, 220, 1),
            Err(DataError::BadParam(_))
        ));
        assert!(matches!(
            synth_trial(0.5, Task::Suturing, 2, 199, 1),
            Err(DataError::BadParam(_))
        ));
        assert!(matches!(
            synth_trial(0.5, Task::Suturing, 0, 220, 1),
            Err(DataError::BadParam(_))
        ));
    }

    #[test]
    fn synth_labels_monotone_in_skill() {
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let mut last = 0;
        for s in grid {
            let labels = synth_labels(s);
            assert!(labels.grs >= last, "grs dropped at skill {s}");
            assert_eq!(labels.grs, labels.osats.sum());
            last = labels.grs;
        }
    }

    #[test]
    fn dataset_round_trip_through_disk() {
        let ds = synth_dataset(2, 2, Task::Suturing, 2, 210, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let loaded = load_dataset(dir.path(), Task::Suturing).unwrap();
        assert_eq!(loaded.len(), 4);
        assert_eq!(loaded.surgeons(), vec!["S0".to_string(), "S1".to_string()]);
        for (a, b) in ds.trials().iter().zip(loaded.trials()) {
            assert_eq!(a.labels, b.labels);
            assert_eq!(a.series.n_frames(), b.series.n_frames());
        }
    }

    #[test]
    fn load_dataset_missing_meta() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_dataset(dir.path(), Task::Suturing),
            Err(DataError::MissingMeta(_))
        ));
    }

    #[test]
    fn load_dataset_missing_kinematics_names_trial() {
        let dir = tempfile::tempdir().unwrap();
        let task_dir = dir.path().join("Suturing");
        std::fs::create_dir_all(task_dir.join("kinematics")).unwrap();
        std::fs::write(
            task_dir.join("meta.csv"),
            format!("{META_HEADER}\nB,Suturing,1,Expert,5,5,5,5,5,5,30\n"),
        )
        .unwrap();
        match load_dataset(dir.path(), Task::Suturing) {
            Err(DataError::MissingKinematics { trial, .. }) => {
                assert_eq!(trial, "B/Suturing/1")
            }
            other => panic!("expected MissingKinematics, got {other:?}"),
        }
    }

    #[test]
    fn load_dataset_label_inconsistency() {
        let dir = tempfile::tempdir().unwrap();
        let task_dir = dir.path().join("Suturing");
        std::fs::create_dir_all(task_dir.join("kinematics")).unwrap();
        std::fs::write(
            task_dir.join("meta.csv"),
            format!("{META_HEADER}\nB,Suturing,1,Expert,3,4,3,4,3,4,20\n"),
        )
        .unwrap();
        std::fs::write(task_dir.join("kinematics").join("B_1.txt"), "1 2\n3 4\n").unwrap();
        assert!(matches!(
            load_dataset(dir.path(), Task::Suturing),
            Err(DataError::LabelInconsistency { grs: 20, sum: 21, .. })
        ));
    }
}
