//! Panel files: CSV (`curve_index,k,t_k,value[,curve_id]`) and a compact binary layout,
//! plus the JSON sidecar written next to simulated panels.
//!
//! Binary layout (little endian): 8-byte magic `FSVPNL01`, `N: u64`, `m: u64`, then the
//! `N × (m+1)` values as `f64`, row-major.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::model::ModelParams;
use crate::sim::CurvePanel;

pub const PANEL_MAGIC: &[u8; 8] = b"FSVPNL01";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanelFormat {
    Csv,
    Binary,
}

impl PanelFormat {
    /// `.bin` means binary, anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("bin") => PanelFormat::Binary,
            _ => PanelFormat::Csv,
        }
    }
}

pub fn write_panel_csv<W: Write>(panel: &CurvePanel<f64>, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let grid = panel.grid();
    let ids = panel.ids();
    if ids.is_some() {
        wtr.write_record(["curve_index", "k", "t_k", "value", "curve_id"])?;
    } else {
        wtr.write_record(["curve_index", "k", "t_k", "value"])?;
    }
    for (i, row) in panel.rows().enumerate() {
        for (k, v) in row.iter().enumerate() {
            let mut rec = vec![i.to_string(), k.to_string(), grid.point::<f64>(k).to_string(), v.to_string()];
            if let Some(ids) = ids {
                rec.push(ids[i].clone());
            }
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct PanelRow {
    curve_index: usize,
    k: usize,
    #[allow(dead_code)]
    t_k: f64,
    value: f64,
    #[serde(default)]
    curve_id: Option<String>,
}

pub fn read_panel_csv<R: Read>(input: R) -> Result<CurvePanel<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut rows: Vec<(usize, usize, f64, Option<String>)> = Vec::new();
    for (idx, rec) in rdr.deserialize::<PanelRow>().enumerate() {
        let line = idx + 2;
        let r = rec.map_err(|e| Error::Data(format!("panel CSV line {line}: {e}")))?;
        if !r.value.is_finite() {
            return Err(Error::Data(format!("panel CSV line {line}: non-finite value")));
        }
        rows.push((r.curve_index, r.k, r.value, r.curve_id));
    }
    if rows.is_empty() {
        return Err(Error::Data("panel CSV holds no rows".into()));
    }
    let n = rows.iter().map(|r| r.0).max().unwrap() + 1;
    let m = rows.iter().map(|r| r.1).max().unwrap();
    let grid = TimeGrid::new(m).map_err(|_| Error::Data(format!("panel CSV grid has m = {m} < 2")))?;
    let w = grid.len();
    let mut values = vec![f64::NAN; n * w];
    let mut ids: Vec<Option<String>> = vec![None; n];
    for (i, k, v, id) in rows {
        let slot = &mut values[i * w + k];
        if !slot.is_nan() {
            return Err(Error::Data(format!("panel CSV repeats curve {i}, k = {k}")));
        }
        *slot = v;
        if id.is_some() {
            ids[i] = id;
        }
    }
    if let Some(pos) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::Data(format!("panel CSV misses curve {}, k = {}", pos / w, pos % w)));
    }
    let panel = CurvePanel::new(grid, n, values)?;
    if ids.iter().all(Option::is_some) {
        panel.with_ids(ids.into_iter().map(Option::unwrap).collect())
    } else {
        Ok(panel)
    }
}

pub fn write_panel_binary<W: Write>(panel: &CurvePanel<f64>, mut out: W) -> Result<()> {
    out.write_all(PANEL_MAGIC)?;
    out.write_all(&(panel.n_curves() as u64).to_le_bytes())?;
    out.write_all(&(panel.grid().m() as u64).to_le_bytes())?;
    for v in panel.values() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_panel_binary<R: Read>(mut input: R) -> Result<CurvePanel<f64>> {
    let mut head = [0u8; 24];
    input.read_exact(&mut head).map_err(|_| Error::Data("binary panel shorter than its 24-byte header".into()))?;
    if &head[..8] != PANEL_MAGIC {
        return Err(Error::Data("not a binary panel (bad magic)".into()));
    }
    let n = u64::from_le_bytes(head[8..16].try_into().unwrap()) as usize;
    let m = u64::from_le_bytes(head[16..24].try_into().unwrap()) as usize;
    let grid = TimeGrid::new(m).map_err(|_| Error::Data(format!("binary panel has m = {m} < 2")))?;
    let count = n.checked_mul(grid.len()).ok_or_else(|| Error::Data("binary panel dimensions overflow".into()))?;
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(Error::Data(format!(
            "binary panel body has {} bytes, expected {} for N = {n}, m = {m}",
            bytes.len(),
            count * 8
        )));
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    CurvePanel::new(grid, n, values)
}

pub fn write_panel(path: &Path, panel: &CurvePanel<f64>) -> Result<()> {
    let out = BufWriter::new(File::create(path)?);
    match PanelFormat::from_path(path) {
        PanelFormat::Csv => write_panel_csv(panel, out),
        PanelFormat::Binary => write_panel_binary(panel, out),
    }
}

pub fn read_panel(path: &Path) -> Result<CurvePanel<f64>> {
    let input = BufReader::new(
        File::open(path).map_err(|e| Error::Data(format!("cannot open panel {}: {e}", path.display())))?,
    );
    match PanelFormat::from_path(path) {
        PanelFormat::Csv => read_panel_csv(input),
        PanelFormat::Binary => read_panel_binary(input),
    }
}

/// True parameters and latent path of a simulated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSidecar {
    pub params: ModelParams<f64>,
    #[serde(rename = "N")]
    pub n: usize,
    pub m: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub log_g: Vec<f64>,
}

/// Serializes any value as pretty JSON followed by a newline.
pub fn write_json<T: Serialize, W: Write>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CurvePanel<f64> {
        let grid = TimeGrid::new(3).unwrap();
        CurvePanel::from_rows(grid, &[vec![0.0, 0.1, -0.05, 1e-17], vec![0.0, -0.2, 0.3, 0.25]]).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let p = sample();
        let mut buf = Vec::new();
        write_panel_csv(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("curve_index,k,t_k,value\n0,0,0,0\n"));
        assert_eq!(read_panel_csv(&buf[..]).unwrap(), p);
    }

    #[test]
    fn csv_round_trip_with_ids() {
        let p = sample().with_ids(vec!["A:2020-01-02".into(), "A:2020-01-03".into()]).unwrap();
        let mut buf = Vec::new();
        write_panel_csv(&p, &mut buf).unwrap();
        assert_eq!(read_panel_csv(&buf[..]).unwrap(), p);
    }

    #[test]
    fn binary_round_trip() {
        let p = sample();
        let mut buf = Vec::new();
        write_panel_binary(&p, &mut buf).unwrap();
        assert_eq!(&buf[..8], b"FSVPNL01");
        assert_eq!(buf.len(), 24 + 8 * 8);
        assert_eq!(read_panel_binary(&buf[..]).unwrap(), p);
    }

    #[test]
    fn binary_rejects_garbage() {
        assert!(matches!(read_panel_binary(&b"NOTPANEL"[..]), Err(Error::Data(_))));
        let mut buf = Vec::new();
        write_panel_binary(&sample(), &mut buf).unwrap();
        buf.pop();
        assert!(matches!(read_panel_binary(&buf[..]), Err(Error::Data(_))));
        buf[0] = b'X';
        assert!(matches!(read_panel_binary(&buf[..]), Err(Error::Data(_))));
    }

    #[test]
    fn csv_reports_line_and_gaps() {
        let bad = "curve_index,k,t_k,value\n0,0,0,0\n0,1,0.5,abc\n";
        match read_panel_csv(bad.as_bytes()) {
            Err(Error::Data(msg)) => assert!(msg.contains("line 3"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let gap = "curve_index,k,t_k,value\n0,0,0,0\n0,2,1,0.1\n";
        assert!(matches!(read_panel_csv(gap.as_bytes()), Err(Error::Data(_))));
    }

    #[test]
    fn format_by_extension() {
        assert_eq!(PanelFormat::from_path(Path::new("x.bin")), PanelFormat::Binary);
        assert_eq!(PanelFormat::from_path(Path::new("x.csv")), PanelFormat::Csv);
        assert_eq!(PanelFormat::from_path(Path::new("x")), PanelFormat::Csv);
    }
}
