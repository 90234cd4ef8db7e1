//! Dataset file formats.
//!
//! Primary format: CSV with header `location_id,v_0,...,v_{T-1}`, one row per
//! location. Empty cells or `nan` are treated as missing and imputed by last
//! observation carried forward at load. An optional flat binary sidecar
//! (little-endian f64, row-major) allows fast reload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tsdata::{impute_locf, TimeSeriesStore};

const BIN_MAGIC: &[u8; 8] = b"DCATSTS\0";
const BIN_VERSION: u32 = 1;

/// Load a store from a `.csv` file or a binary sidecar (by extension).
pub fn load_store(path: &Path) -> Result<TimeSeriesStore> {
    load_store_with(path, 15, 96)
}

/// Same as [`load_store`] but with explicit interval metadata for CSV input.
pub fn load_store_with(
    path: &Path,
    interval_minutes: u32,
    steps_per_day: usize,
) -> Result<TimeSeriesStore> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => read_binary(path),
        _ => read_csv(path, interval_minutes, steps_per_day),
    }
}

fn read_csv(path: &Path, interval_minutes: u32, steps_per_day: usize) -> Result<TimeSeriesStore> {
    let file = File::open(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(BufReader::new(file));

    let headers = reader
        .headers()
        .map_err(|e| Error::data(format!("malformed header in {}: {e}", path.display())))?
        .clone();
    if headers.len() < 2 || headers.get(0) != Some("location_id") {
        return Err(Error::data(format!(
            "malformed header in {}: expected `location_id,v_0,...`",
            path.display()
        )));
    }
    let n_steps = headers.len() - 1;

    let mut rows = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != n_steps + 1 {
            return Err(Error::data(format!(
                "ragged row {row_no}: expected {} fields, got {}",
                n_steps + 1,
                record.len()
            )));
        }
        let id: u32 = record[0]
            .trim()
            .parse()
            .map_err(|_| Error::data(format!("row {row_no}: invalid location_id `{}`", &record[0])))?;
        let mut series = Vec::with_capacity(n_steps);
        for (col, field) in record.iter().skip(1).enumerate() {
            let field = field.trim();
            if field.is_empty() || field.eq_ignore_ascii_case("nan") {
                series.push(f64::NAN);
            } else {
                series.push(field.parse::<f64>().map_err(|_| {
                    Error::data(format!("row {row_no}, column v_{col}: invalid value `{field}`"))
                })?);
            }
        }
        impute_locf(&mut series)
            .map_err(|_| Error::data(format!("row {row_no} (location_id {id}) has no valid values")))?;
        rows.push((id, series));
    }
    if rows.is_empty() {
        return Err(Error::data(format!("{} contains no data rows", path.display())));
    }
    TimeSeriesStore::new(rows, interval_minutes, steps_per_day)
}

/// Write the store as CSV (full round-trip precision).
pub fn write_csv(store: &TimeSeriesStore, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "location_id")?;
    for t in 0..store.n_steps() {
        write!(w, ",v_{t}")?;
    }
    writeln!(w)?;
    for (row, &id) in store.location_ids().iter().enumerate() {
        write!(w, "{id}")?;
        for v in store.row(row) {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Write the binary sidecar: header + ids + little-endian f64 values.
pub fn write_binary(store: &TimeSeriesStore, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BIN_MAGIC)?;
    w.write_all(&BIN_VERSION.to_le_bytes())?;
    w.write_all(&store.interval_minutes.to_le_bytes())?;
    w.write_all(&(store.steps_per_day as u32).to_le_bytes())?;
    w.write_all(&(store.n_locations() as u64).to_le_bytes())?;
    w.write_all(&(store.n_steps() as u64).to_le_bytes())?;
    for &id in store.location_ids() {
        w.write_all(&id.to_le_bytes())?;
    }
    for &v in store.raw_values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary(path: &Path) -> Result<TimeSeriesStore> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::data(format!("{}: truncated header", path.display())))?;
    if &magic != BIN_MAGIC {
        return Err(Error::data(format!("{}: not a dcats binary dataset", path.display())));
    }
    let version = read_u32(&mut r)?;
    if version != BIN_VERSION {
        return Err(Error::data(format!("unsupported dataset version {version}")));
    }
    let interval_minutes = read_u32(&mut r)?;
    let steps_per_day = read_u32(&mut r)? as usize;
    let n_locations = read_u64(&mut r)? as usize;
    let n_steps = read_u64(&mut r)? as usize;
    let mut rows = Vec::with_capacity(n_locations);
    let mut ids = Vec::with_capacity(n_locations);
    for _ in 0..n_locations {
        ids.push(read_u32(&mut r)?);
    }
    let mut buf = vec![0u8; n_steps * 8];
    for &id in &ids {
        r.read_exact(&mut buf)
            .map_err(|_| Error::data(format!("{}: truncated values", path.display())))?;
        let series = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        rows.push((id, series));
    }
    TimeSeriesStore::new(rows, interval_minutes, steps_per_day)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpfile(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("dcats-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn csv_round_trip_with_missing_values() {
        let path = tmpfile("small.csv");
        std::fs::write(
            &path,
            "location_id,v_0,v_1,v_2,v_3\n7,1.5,,3.0,nan\n9,2.0,2.5,3.5,4.0\n",
        )
        .unwrap();
        let store = load_store(&path).unwrap();
        assert_eq!(store.n_locations(), 2);
        assert_eq!(store.n_steps(), 4);
        // gap imputed by carry-forward
        assert_eq!(store.series(7).unwrap(), &[1.5, 1.5, 3.0, 3.0]);
    }

    #[test]
    fn csv_shape_echo() {
        let path = tmpfile("echo.csv");
        let mut text = String::from("location_id");
        for t in 0..8 {
            text.push_str(&format!(",v_{t}"));
        }
        text.push('\n');
        for id in 0..3 {
            text.push_str(&format!("{id},1,2,3,4,5,6,7,8\n"));
        }
        std::fs::write(&path, text).unwrap();
        let store = load_store(&path).unwrap();
        assert_eq!((store.n_locations(), store.n_steps()), (3, 8));
    }

    #[test]
    fn csv_errors_name_the_row() {
        let path = tmpfile("ragged.csv");
        std::fs::write(&path, "location_id,v_0,v_1\n1,1.0,2.0\n2,1.0\n").unwrap();
        let err = load_store(&path).unwrap_err().to_string();
        assert!(err.contains("row 1"), "{err}");

        let path = tmpfile("dup.csv");
        std::fs::write(&path, "location_id,v_0\n1,1.0\n1,2.0\n").unwrap();
        let err = load_store(&path).unwrap_err().to_string();
        assert!(err.contains("duplicate location_id 1"), "{err}");
    }

    #[test]
    fn empty_file_is_a_load_error() {
        let path = tmpfile("empty.csv");
        std::fs::write(&path, "").unwrap();
        assert!(load_store(&path).is_err());
        let path = tmpfile("header_only.csv");
        std::fs::write(&path, "location_id,v_0\n").unwrap();
        assert!(load_store(&path).is_err());
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let store = TimeSeriesStore::new(
            vec![(3, vec![1.25, -0.5, 1e9]), (5, vec![0.0, f64::MIN_POSITIVE, 42.0])],
            15,
            96,
        )
        .unwrap();
        let path = tmpfile("store.bin");
        write_binary(&store, &path).unwrap();
        let back = read_binary(&path).unwrap();
        assert_eq!(store, back);
    }
}
