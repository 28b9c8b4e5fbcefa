use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::MurmurLabel;
use crate::audio::probe_wav;
use crate::error::{Error, Result};

/// One recording of a patient: its id (the WAV file stem) and location on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recording {
    pub id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub label: MurmurLabel,
    pub recordings: Vec<Recording>,
}

impl PatientRecord {
    pub fn recording_ids(&self) -> impl Iterator<Item = &str> {
        self.recordings.iter().map(|r| r.id.as_str())
    }
}

/// Patients found by an ingestion pass plus non-fatal problems encountered.
#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub patients: Vec<PatientRecord>,
    pub warnings: Vec<String>,
}

fn recording_id_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn metadata_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Metadata {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

#[derive(Debug)]
struct CircorHeader {
    patient_id: String,
    label: MurmurLabel,
    wav_files: Vec<String>,
}

fn parse_circor_text(path: &Path, text: &str) -> Result<CircorHeader> {
    let mut lines = text.lines();
    let first = lines
        .next()
        .ok_or_else(|| metadata_err(path, "empty patient file"))?;
    let mut head = first.split_whitespace();
    let patient_id = head
        .next()
        .ok_or_else(|| metadata_err(path, "missing patient id on header line"))?
        .to_string();
    let n_rec: usize = head
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| metadata_err(path, "missing recording count on header line"))?;

    let mut wav_files = Vec::with_capacity(n_rec);
    for i in 0..n_rec {
        let line = lines
            .next()
            .ok_or_else(|| metadata_err(path, format!("header lists {n_rec} recordings, found {i}")))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let wav = tokens
            .iter()
            .find(|t| t.to_ascii_lowercase().ends_with(".wav"))
            .map(|t| t.to_string())
            .or_else(|| tokens.first().map(|loc| format!("{patient_id}_{loc}.wav")))
            .ok_or_else(|| metadata_err(path, format!("blank recording line {}", i + 2)))?;
        wav_files.push(wav);
    }

    let mut label = None;
    for line in text.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((key, value)) = rest.split_once(':') {
                if key.trim().eq_ignore_ascii_case("murmur") {
                    label = Some(value.parse::<MurmurLabel>().map_err(|e| metadata_err(path, e))?);
                    break;
                }
            }
        }
    }
    let label = label.ok_or_else(|| metadata_err(path, "no `#Murmur:` line"))?;
    Ok(CircorHeader {
        patient_id,
        label,
        wav_files,
    })
}

/// Reads a CirCor-style directory: one `<patient_id>.txt` per patient whose
/// header lists the recordings and whose `#Murmur:` line carries the label.
///
/// Unreadable WAV files are reported in [`Ingested::warnings`]; patients left
/// without any readable recording are skipped.
pub fn ingest_circor(dir: impl AsRef<Path>) -> Result<Ingested> {
    let dir = dir.as_ref();
    let mut txt_files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("txt")))
        .collect();
    txt_files.sort();

    let mut out = Ingested::default();
    let mut seen_recordings = HashSet::new();
    for txt in txt_files {
        let text = std::fs::read_to_string(&txt).map_err(|e| Error::io(&txt, e))?;
        let header = parse_circor_text(&txt, &text)?;
        let mut recordings = Vec::new();
        for wav in &header.wav_files {
            let path = dir.join(wav);
            let id = recording_id_of(&path);
            if recordings.iter().any(|r: &Recording| r.id == id) {
                return Err(metadata_err(&txt, format!("recording {id} listed twice")));
            }
            if !seen_recordings.insert(id.clone()) {
                return Err(metadata_err(&txt, format!("recording {id} belongs to another patient")));
            }
            match probe_wav(&path) {
                Ok(_) => recordings.push(Recording { id, path }),
                Err(e) => out
                    .warnings
                    .push(format!("patient {}: skipping recording: {e}", header.patient_id)),
            }
        }
        if recordings.is_empty() {
            let msg = format!("patient {} has no readable recordings; skipped", header.patient_id);
            log::warn!("{msg}");
            out.warnings.push(msg);
            continue;
        }
        out.patients.push(PatientRecord {
            patient_id: header.patient_id,
            label: header.label,
            recordings,
        });
    }
    out.patients.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    patient_id: String,
    label: String,
    wav_path: String,
}

/// Reads a `patient_id,label,wav_path` CSV. Relative WAV paths resolve against
/// the manifest's directory. Patients come back sorted by id; recordings keep
/// row order.
pub fn ingest_manifest(path: impl AsRef<Path>) -> Result<Vec<PatientRecord>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other:?}", path.display())),
    })?;
    let headers = reader.headers()?.clone();
    let expected = ["patient_id", "label", "wav_path"];
    if headers.iter().map(str::trim).ne(expected) {
        return Err(Error::Format(format!(
            "{}: header must be `patient_id,label,wav_path`, got `{}`",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut patients: BTreeMap<String, PatientRecord> = BTreeMap::new();
    let mut owner: BTreeMap<String, String> = BTreeMap::new();
    for (line, row) in reader.deserialize::<ManifestRow>().enumerate() {
        let row = row.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let at = || format!("{} row {}", path.display(), line + 2);
        let label: MurmurLabel = row
            .label
            .parse()
            .map_err(|e| Error::Format(format!("{}: {e}", at())))?;
        let wav = base.join(row.wav_path.trim());
        let id = recording_id_of(&wav);
        let entry = patients
            .entry(row.patient_id.clone())
            .or_insert_with(|| PatientRecord {
                patient_id: row.patient_id.clone(),
                label,
                recordings: Vec::new(),
            });
        if entry.label != label {
            return Err(Error::Format(format!(
                "{}: patient {} labelled both {} and {label}",
                at(),
                row.patient_id,
                entry.label
            )));
        }
        if entry.recordings.iter().any(|r| r.path == wav) {
            return Err(Error::Format(format!(
                "{}: duplicate row for patient {} and {}",
                at(),
                row.patient_id,
                row.wav_path
            )));
        }
        if let Some(other) = owner.insert(id.clone(), row.patient_id.clone()) {
            return Err(Error::Format(format!(
                "{}: recording id {id} already used by patient {other}",
                at()
            )));
        }
        entry.recordings.push(Recording { id, path: wav });
    }
    Ok(patients.into_values().collect())
}

/// Writes patients as a manifest CSV in canonical order (patients by id,
/// recordings in their stored order).
pub fn export_manifest(patients: &[PatientRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut sorted: Vec<&PatientRecord> = patients.iter().collect();
    sorted.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    let mut writer = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Format(format!("{other:?}")),
    })?;
    if sorted.is_empty() {
        writer.write_record(["patient_id", "label", "wav_path"])?;
    }
    for p in sorted {
        for r in &p.recordings {
            writer.serialize(ManifestRow {
                patient_id: p.patient_id.clone(),
                label: p.label.to_string(),
                wav_path: r.path.to_string_lossy().into_owned(),
            })?;
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
