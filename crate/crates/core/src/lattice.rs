//! Synthetic frame-posterior lattices.
//!
//! The emulator turns a reference line into a matrix of per-frame label
//! posteriors over `[<blank>, characters…]`, imitating the output of an
//! optical character recognizer. Each character occupies a fixed number
//! of frames: the first frame carries the character's probability mass,
//! the following frames are blank-dominated so repeated characters stay
//! separable.
//!
//! Noise is injected stochastically from a seeded generator. With
//! confusion mass `ε`, each character independently suffers a confusion
//! event with probability `ε`; a confused first frame ranks a random
//! wrong character above the true one (so the error is visible to a
//! greedy reader and a language model has something to repair). An
//! unconfused first frame keeps the true character on top, leaking at
//! most a fraction of `ε` to the alternatives. `ε = 0` yields one-hot
//! rows and lossless greedy read-back.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fst::SymbolTable;
use crate::graph::char_symbol;
use crate::tokens::BLANK;

/// Label id of the blank symbol in a frame alphabet.
pub const BLANK_LABEL: u32 = 1;

/// Acoustic-style posteriors: one row per frame, one column per label id
/// (column 0, epsilon, is always zero). Every row sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorLattice {
    pub labels: SymbolTable,
    pub rows: Vec<Vec<f64>>,
}

impl PosteriorLattice {
    pub fn num_frames(&self) -> usize {
        self.rows.len()
    }

    /// Validate shape and row sums (used after reading from disk).
    pub fn validate(&self) -> Result<()> {
        let width = self.labels.len();
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::InvalidParameter(format!(
                    "frame {i} has {} entries, expected {width}",
                    row.len()
                )));
            }
            if row[0] != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "frame {i} puts mass on the epsilon label"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidParameter(format!(
                    "frame {i} is not a probability distribution (sum {sum})"
                )));
            }
        }
        Ok(())
    }
}

/// Noise controls for the emulator.
#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    /// Confusion mass ε in `[0, 1)`: per-character probability of a
    /// confusion event, and the mass leaked away from the true label
    /// otherwise.
    pub confusion_mass: f64,
    /// Frames per character (≥ 2 so repeated characters separate).
    pub frames_per_char: usize,
    /// On non-first frames, the fraction of the leaked mass that goes to
    /// the true character rather than the rest of the alphabet.
    pub blank_bias: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            confusion_mass: 0.0,
            frames_per_char: 3,
            blank_bias: 0.7,
            seed: 17,
        }
    }
}

fn validate_spec(spec: &NoiseSpec) -> Result<()> {
    if !(0.0..1.0).contains(&spec.confusion_mass) {
        return Err(Error::InvalidParameter(format!(
            "confusion mass must be in [0, 1), got {}",
            spec.confusion_mass
        )));
    }
    if spec.frames_per_char < 2 {
        return Err(Error::InvalidParameter(
            "frames_per_char must be at least 2".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.blank_bias) {
        return Err(Error::InvalidParameter(format!(
            "blank bias must be in [0, 1], got {}",
            spec.blank_bias
        )));
    }
    Ok(())
}

fn normalize(row: &mut [f64]) {
    let sum: f64 = row.iter().sum();
    debug_assert!(sum > 0.0);
    for p in row.iter_mut() {
        *p /= sum;
    }
}

/// Synthesize the posterior lattice for one line of text.
///
/// `labels` must be a frame alphabet: `[<eps>, <blank>, characters…]`.
/// Every character of `text` must be present in it.
pub fn synthesize_lattice(
    text: &str,
    labels: &SymbolTable,
    spec: &NoiseSpec,
) -> Result<PosteriorLattice> {
    validate_spec(spec)?;
    if labels.id(BLANK) != Some(BLANK_LABEL) {
        return Err(Error::LabelTableMismatch(format!(
            "frame alphabet must place {BLANK} at id {BLANK_LABEL}"
        )));
    }
    if text.is_empty() {
        return Err(Error::EmptyInput("cannot synthesize an empty line".into()));
    }
    let width = labels.len();
    let n_real = width - 1; // blank + characters
    let n_chars = n_real - 1;
    let char_ids: Vec<u32> = (2..width as u32).collect();
    let mut char_labels = Vec::new();
    for c in text.chars() {
        let id = labels.id(&char_symbol(c)).ok_or_else(|| {
            Error::InvalidParameter(format!("character {c:?} is not in the frame alphabet"))
        })?;
        char_labels.push(id);
    }

    let eps = spec.confusion_mass;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::with_capacity(char_labels.len() * spec.frames_per_char);
    for &true_label in &char_labels {
        // First frame: the character shows itself (or a confusion).
        let mut row = vec![0.0; width];
        let confused = n_chars >= 2 && rng.gen::<f64>() < eps;
        if confused {
            let wrong = loop {
                let cand = char_ids[rng.gen_range(0..char_ids.len())];
                if cand != true_label {
                    break cand;
                }
            };
            let p_wrong = 0.45 + 0.1 * rng.gen::<f64>();
            let p_true = 0.30 + 0.1 * rng.gen::<f64>();
            let rest = (1.0 - p_wrong - p_true) / (n_real - 2) as f64;
            row[1..width].fill(rest);
            row[wrong as usize] = p_wrong;
            row[true_label as usize] = p_true;
        } else {
            let p_true = 1.0 - eps * (0.3 + 0.4 * rng.gen::<f64>());
            if n_chars >= 2 {
                let rest = (1.0 - p_true) / (n_chars - 1) as f64;
                for &l in &char_ids {
                    row[l as usize] = rest;
                }
            }
            row[true_label as usize] = p_true;
        }
        normalize(&mut row[1..]);
        row[0] = 0.0;
        rows.push(row);

        // Remaining frames: blank-dominated.
        for _ in 1..spec.frames_per_char {
            let mut row = vec![0.0; width];
            row[BLANK_LABEL as usize] = 1.0 - eps;
            if n_chars >= 2 {
                row[true_label as usize] = eps * spec.blank_bias;
                let rest = eps * (1.0 - spec.blank_bias) / (n_chars - 1) as f64;
                for &l in &char_ids {
                    if l != true_label {
                        row[l as usize] = rest;
                    }
                }
            } else {
                row[true_label as usize] = eps;
            }
            normalize(&mut row[1..]);
            row[0] = 0.0;
            rows.push(row);
        }
    }

    Ok(PosteriorLattice {
        labels: labels.clone(),
        rows,
    })
}

/// Read the lattice the way a greedy decoder would: argmax per frame,
/// collapse runs, drop blanks, map labels back to characters. The
/// result is trimmed and internally single-spaced — the normalized line
/// form shared by reference text — so noise-induced stray spaces at the
/// edges do not leak into scoring.
pub fn greedy_collapse(lat: &PosteriorLattice) -> String {
    let mut out = String::new();
    let mut prev = 0u32;
    for row in &lat.rows {
        let mut best = BLANK_LABEL;
        let mut best_p = f64::NEG_INFINITY;
        for (l, &p) in row.iter().enumerate().skip(1) {
            if p > best_p {
                best_p = p;
                best = l as u32;
            }
        }
        if best != prev && best != BLANK_LABEL {
            if let Some(name) = lat.labels.name(best) {
                if name == "<space>" {
                    out.push(' ');
                } else {
                    out.push_str(name);
                }
            }
        }
        prev = best;
    }
    let words: Vec<&str> = out.split_whitespace().collect();
    words.join(" ")
}

/// Write a lattice matrix: a `#frames=N labels=M` header, then one line
/// per frame holding `M` tab-separated probabilities for label ids
/// `1..=M`. Floats use shortest round-trip notation, so read-back is
/// bit-exact.
pub fn write_lattice(lat: &PosteriorLattice, path: &Path) -> Result<()> {
    let m = lat.labels.len() - 1;
    let mut text = format!("#frames={} labels={}\n", lat.rows.len(), m);
    for row in &lat.rows {
        let fields: Vec<String> = row[1..].iter().map(|p| format!("{p}")).collect();
        text.push_str(&fields.join("\t"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Read a lattice matrix written by [`write_lattice`]; `labels` supplies
/// the alphabet and must match the header's label count.
pub fn read_lattice(path: &Path, labels: &SymbolTable) -> Result<PosteriorLattice> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = raw.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::format(path, 1, "missing header"))?;
    let parse_header = || -> Option<(usize, usize)> {
        let rest = header.strip_prefix("#frames=")?;
        let (n, m) = rest.split_once(" labels=")?;
        Some((n.parse().ok()?, m.parse().ok()?))
    };
    let (n_frames, m) =
        parse_header().ok_or_else(|| Error::format(path, 1, "expected #frames=N labels=M"))?;
    if m != labels.len() - 1 {
        return Err(Error::LabelTableMismatch(format!(
            "lattice declares {m} labels but the alphabet has {}",
            labels.len() - 1
        )));
    }
    let mut rows = Vec::with_capacity(n_frames);
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::with_capacity(m + 1);
        row.push(0.0);
        for field in line.split('\t') {
            let p: f64 = field
                .parse()
                .map_err(|_| Error::format(path, i + 1, "bad probability"))?;
            row.push(p);
        }
        if row.len() != m + 1 {
            return Err(Error::format(
                path,
                i + 1,
                format!("expected {m} fields, found {}", row.len() - 1),
            ));
        }
        rows.push(row);
    }
    if rows.len() != n_frames {
        return Err(Error::format(
            path,
            1,
            format!("header declares {n_frames} frames, file has {}", rows.len()),
        ));
    }
    let lat = PosteriorLattice {
        labels: labels.clone(),
        rows,
    };
    lat.validate()?;
    Ok(lat)
}

/// One evaluation item: a lattice file and its reference transcription.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub lattice: PathBuf,
    pub reference: String,
}

/// Write a manifest: `lattice_file<TAB>reference` per line. Paths are
/// stored as given (typically relative to the manifest's directory).
pub fn write_manifest(entries: &[ManifestEntry], path: &Path) -> Result<()> {
    let mut text = String::new();
    for e in entries {
        text.push_str(&format!("{}\t{}\n", e.lattice.display(), e.reference));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (file, reference) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(path, i + 1, "expected lattice<TAB>reference"))?;
        entries.push(ManifestEntry {
            lattice: PathBuf::from(file),
            reference: reference.to_string(),
        });
    }
    if entries.is_empty() {
        return Err(Error::EmptyInput(format!(
            "manifest {} has no entries",
            path.display()
        )));
    }
    Ok(entries)
}
