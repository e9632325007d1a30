use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use super::EmbedError;

/// Write `address,z0,…` rows with 17 significant digits per value.
pub fn write_embeddings(path: &Path, addresses: &[String], z: &Array2<f64>) -> Result<(), EmbedError> {
    if addresses.len() != z.nrows() {
        return Err(EmbedError::ShapeMismatch(format!(
            "{} addresses for {} embedding rows",
            addresses.len(),
            z.nrows()
        )));
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    let header: Vec<String> = (0..z.ncols()).map(|j| format!("z{j}")).collect();
    writeln!(w, "address,{}", header.join(","))?;
    for (addr, row) in addresses.iter().zip(z.rows()) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{addr},{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<(Vec<String>, Array2<f64>), EmbedError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| EmbedError::Parse("empty embeddings file".into()))?;
    let width = header.split(',').count().saturating_sub(1);
    let mut addresses = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut cells = line.split(',');
        let addr = cells.next().unwrap_or_default().to_string();
        let row: Vec<f64> = cells
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| EmbedError::Parse(format!("line {}: {e}", i + 2)))?;
        if row.len() != width {
            return Err(EmbedError::Parse(format!("line {}: expected {width} values, got {}", i + 2, row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        addresses.push(addr);
        values.extend(row);
    }
    let z = Array2::from_shape_vec((addresses.len(), width), values).expect("row widths checked");
    Ok((addresses, z))
}
