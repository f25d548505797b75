//! On-disk orbit cache.
//!
//! ```text
//! sprlab-orbit v1
//! #meta group=<hash> r_max=<R> basepoint=<x>,<y>
//! word;dist;x;y
//! 0^1;1.76...;0.51...;0.23...
//! #checksum sha256:<hex> rows:<n>
//! ```
//!
//! Words use generator indices (see [`Word::to_index_string`]). Floats are
//! written in shortest round-trip form, so a load reproduces the store bit
//! for bit. The checksum covers every byte before the footer line.

use super::{GroupPresentation, Orbit, OrbitPoint};
use crate::error::{Error, Result};
use crate::kernel::HPoint;
use crate::word::Word;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

pub const CACHE_HEADER: &str = "sprlab-orbit v1";
const COLUMNS: &str = "word;dist;x;y";

/// Metadata recorded in a cache file.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheMeta {
    pub group_hash: String,
    pub r_max: f64,
    pub basepoint: HPoint,
}

fn render(orbit: &Orbit) -> String {
    let mut s = String::with_capacity(64 * orbit.points.len() + 128);
    let _ = writeln!(s, "{CACHE_HEADER}");
    let _ = writeln!(
        s,
        "#meta group={} r_max={} basepoint={},{}",
        orbit.group_hash,
        orbit.r_max,
        orbit.basepoint.x(),
        orbit.basepoint.y()
    );
    let _ = writeln!(s, "{COLUMNS}");
    for p in &orbit.points {
        let _ = writeln!(s, "{};{};{};{}", p.word, p.dist, p.image.x(), p.image.y());
    }
    let digest = hex::encode(Sha256::digest(s.as_bytes()));
    let _ = writeln!(s, "#checksum sha256:{digest} rows:{}", orbit.points.len());
    s
}

/// Writes the cache atomically: a temporary file in the target directory
/// is renamed over the destination.
pub fn store_orbit(path: &Path, orbit: &Orbit) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(render(orbit).as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("line {line}: {field:?}: {e}")))
}

fn split_verified(text: &str) -> Result<(Vec<&str>, usize)> {
    let first = text.lines().next().unwrap_or("");
    if first != CACHE_HEADER {
        return Err(Error::VersionMismatch(first.to_string()));
    }
    let body_end = text
        .trim_end_matches('\n')
        .rfind('\n')
        .map(|i| i + 1)
        .unwrap_or(0);
    let footer = text[body_end..].trim_end();
    let rest = footer
        .strip_prefix("#checksum sha256:")
        .ok_or_else(|| Error::ChecksumMismatch("missing checksum footer".into()))?;
    let (digest, rows) = rest
        .split_once(" rows:")
        .ok_or_else(|| Error::ChecksumMismatch("malformed checksum footer".into()))?;
    let body = &text[..body_end];
    let actual = hex::encode(Sha256::digest(body.as_bytes()));
    if actual != digest {
        return Err(Error::ChecksumMismatch(format!(
            "expected {digest}, content hashes to {actual}"
        )));
    }
    let rows: usize = rows
        .parse()
        .map_err(|_| Error::ChecksumMismatch(format!("bad row count {rows:?}")))?;
    Ok((body.lines().collect(), rows))
}

fn parse_meta(line: &str) -> Result<CacheMeta> {
    let rest = line
        .strip_prefix("#meta ")
        .ok_or_else(|| Error::Parse("missing #meta line".into()))?;
    let (mut hash, mut r_max, mut base) = (None, None, None);
    for kv in rest.split_whitespace() {
        match kv.split_once('=') {
            Some(("group", v)) => hash = Some(v.to_string()),
            Some(("r_max", v)) => r_max = Some(parse_f64(v, 2)?),
            Some(("basepoint", v)) => {
                let (x, y) = v
                    .split_once(',')
                    .ok_or_else(|| Error::Parse(format!("bad basepoint {v:?}")))?;
                base = Some(HPoint::new(parse_f64(x, 2)?, parse_f64(y, 2)?)?);
            }
            _ => return Err(Error::Parse(format!("unknown metadata {kv:?}"))),
        }
    }
    match (hash, r_max, base) {
        (Some(group_hash), Some(r_max), Some(basepoint)) => Ok(CacheMeta {
            group_hash,
            r_max,
            basepoint,
        }),
        _ => Err(Error::Parse("incomplete #meta line".into())),
    }
}

/// Reads only the metadata, after verifying version and checksum.
pub fn read_meta(path: &Path) -> Result<CacheMeta> {
    let text = std::fs::read_to_string(path)?;
    let (lines, _) = split_verified(&text)?;
    parse_meta(lines.get(1).copied().unwrap_or(""))
}

/// Loads a cache written for `group`; group elements are recomputed from
/// the words.
pub fn load_orbit(path: &Path, group: &GroupPresentation) -> Result<Orbit> {
    let text = std::fs::read_to_string(path)?;
    let (lines, rows) = split_verified(&text)?;
    let meta = parse_meta(lines.get(1).copied().unwrap_or(""))?;
    if meta.group_hash != group.content_hash() {
        return Err(Error::Invalid(format!(
            "cache was written for group {}, not {}",
            meta.group_hash,
            group.content_hash()
        )));
    }
    if lines.get(2).copied() != Some(COLUMNS) {
        return Err(Error::Parse("missing column header".into()));
    }
    let data = &lines[3..];
    if data.len() != rows {
        return Err(Error::ChecksumMismatch(format!(
            "footer announces {rows} rows, found {}",
            data.len()
        )));
    }
    let mut points = Vec::with_capacity(rows);
    let mut det_drift: f64 = 0.0;
    for (i, line) in data.iter().enumerate() {
        let n = i + 4;
        let f: Vec<&str> = line.split(';').collect();
        if f.len() != 4 {
            return Err(Error::Parse(format!("line {n}: expected 4 fields")));
        }
        let word = Word::parse_index_string(f[0])?;
        let element = group.evaluate(&word);
        det_drift = det_drift.max(element.det_drift());
        points.push(OrbitPoint {
            word,
            element,
            image: HPoint::new(parse_f64(f[2], n)?, parse_f64(f[3], n)?)?,
            dist: parse_f64(f[1], n)?,
        });
    }
    Ok(Orbit {
        basepoint: meta.basepoint,
        r_max: meta.r_max,
        group_hash: meta.group_hash,
        points,
        det_drift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{catalog, enumerate_orbit};

    #[test]
    fn store_then_load_is_identity() {
        let g = catalog::symmetric_schottky(1.5, 4.0, 0.7).unwrap();
        let orbit = enumerate_orbit(&g, 7.0, 100_000).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("orbit.csv");
        store_orbit(&path, &orbit).unwrap();
        assert_eq!(load_orbit(&path, &g).unwrap(), orbit);
        assert_eq!(read_meta(&path).unwrap().r_max, 7.0);
    }

    #[test]
    fn corruption_is_detected() {
        let g = catalog::cyclic_parabolic();
        let orbit = enumerate_orbit(&g, 8.0, 10_000).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("orbit.csv");
        store_orbit(&path, &orbit).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_orbit(&path, &g), Err(Error::ChecksumMismatch(_))));
        std::fs::write(&path, text.replace("v1", "v0")).unwrap();
        assert!(matches!(load_orbit(&path, &g), Err(Error::VersionMismatch(_))));
        std::fs::write(&path, text.replacen(";1", ";2", 1)).unwrap();
        assert!(matches!(load_orbit(&path, &g), Err(Error::ChecksumMismatch(_))));
    }

    #[test]
    fn foreign_group_is_rejected() {
        let g = catalog::cyclic_parabolic();
        let h = catalog::cyclic_hyperbolic();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("orbit.csv");
        store_orbit(&path, &enumerate_orbit(&g, 5.0, 1000).unwrap()).unwrap();
        assert!(matches!(load_orbit(&path, &h), Err(Error::Invalid(_))));
    }
}
