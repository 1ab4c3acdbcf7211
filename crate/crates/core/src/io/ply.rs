//! ASCII PLY export of map snapshots, coloured by p-Index.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::map::{MapSnapshot, MapSnapshotRecord};

/// Red for p-Index 0 through green at the bound `γ/(1-γ)`; permanent
/// points are always green.
pub fn pindex_color(record: &MapSnapshotRecord, gamma: f64) -> [u8; 3] {
    if record.permanent {
        return [0, 255, 0];
    }
    let limit = gamma / (1.0 - gamma);
    let t = if limit > 0.0 { (record.pindex / limit).clamp(0.0, 1.0) } else { 0.0 };
    let green = (255.0 * t).round() as u8;
    [255 - green, green, 0]
}

pub fn write_map_ply<W: Write>(snapshot: &MapSnapshot, mut w: W) -> std::io::Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", snapshot.records.len())?;
    for name in ["x", "y", "z"] {
        writeln!(w, "property float {name}")?;
    }
    for name in ["red", "green", "blue"] {
        writeln!(w, "property uchar {name}")?;
    }
    writeln!(w, "end_header")?;
    for r in &snapshot.records {
        let [red, green, blue] = pindex_color(r, snapshot.gamma);
        writeln!(
            w,
            "{} {} {} {red} {green} {blue}",
            r.position.x as f32, r.position.y as f32, r.position.z as f32
        )?;
    }
    w.flush()
}

pub fn export_map_ply(snapshot: &MapSnapshot, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_map_ply(snapshot, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}
