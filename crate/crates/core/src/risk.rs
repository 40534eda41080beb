//! Raster wildfire metrics to per-line ignition probabilities.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PspsError, Result};
use crate::grid::PowerNetwork;

/// Stand-in for ln(0) on zero-risk lines.
pub const LOG_ZERO_SENTINEL: f64 = -1e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Wfpi,
    Wlfp,
}

impl Metric {
    pub fn max_value(self) -> f64 {
        match self {
            Metric::Wfpi => 150.0,
            Metric::Wlfp => 1e-3,
        }
    }
}

/// Maps a raw raster value into the metric's valid range. The flag is set
/// when the value had to be repaired (NaN or out of range); WFPI sentinel
/// codes 249-254 are mapped to zero silently.
pub fn sanitize_metric(raw: f64, metric: Metric) -> (f64, bool) {
    if raw.is_nan() {
        return (0.0, true);
    }
    if metric == Metric::Wfpi && (249.0..=254.0).contains(&raw) && raw.fract() == 0.0 {
        return (0.0, false);
    }
    let max = metric.max_value();
    if raw < 0.0 {
        (0.0, true)
    } else if raw > max {
        (max, true)
    } else {
        (raw, false)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskRaster {
    pub metric: Metric,
    /// (lat, lon) of the center of cell (0, 0), the north-west corner cell.
    pub origin: (f64, f64),
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
    /// Row-major, row 0 northernmost.
    pub values: Vec<f64>,
    pub nodata: Option<f64>,
    pub date: String,
}

pub type Cell = (usize, usize);

impl RiskRaster {
    pub fn new(
        metric: Metric,
        origin: (f64, f64),
        cell_size: f64,
        rows: usize,
        cols: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || !(cell_size > 0.0) {
            return Err(PspsError::Validation("raster needs rows, cols >= 1 and cell_size > 0".into()));
        }
        if values.len() != rows * cols {
            return Err(PspsError::DimensionMismatch(format!(
                "raster has {} values for {rows}x{cols} cells",
                values.len()
            )));
        }
        Ok(Self {
            metric,
            origin,
            cell_size,
            rows,
            cols,
            values,
            nodata: None,
            date: String::new(),
        })
    }

    /// Parses an ESRI ASCII grid.
    pub fn parse_esri(text: &str, metric: Metric, date: &str, origin_path: &Path) -> Result<Self> {
        let perr = |line: usize, message: String| PspsError::Parse {
            path: origin_path.to_path_buf(),
            line,
            message,
        };
        let mut header = std::collections::HashMap::new();
        let mut values = Vec::new();
        for (k, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let first = trimmed.split_whitespace().next().unwrap();
            if first.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) && values.is_empty() {
                let mut parts = trimmed.split_whitespace();
                let key = parts.next().unwrap().to_ascii_lowercase();
                let val: f64 = parts
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| perr(k + 1, format!("bad header line `{trimmed}`")))?;
                header.insert(key, val);
                continue;
            }
            for tok in trimmed.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| perr(k + 1, format!("bad value `{tok}`")))?;
                values.push(v);
            }
        }
        let get = |key: &str| {
            header
                .get(key)
                .copied()
                .ok_or_else(|| perr(1, format!("missing header `{key}`")))
        };
        let cols = get("ncols")? as usize;
        let rows = get("nrows")? as usize;
        let cell = get("cellsize")?;
        let (xll, yll) = match (header.get("xllcorner"), header.get("yllcorner")) {
            (Some(&x), Some(&y)) => (x, y),
            _ => (get("xllcenter")? - 0.5 * cell, get("yllcenter")? - 0.5 * cell),
        };
        if values.len() != rows * cols {
            return Err(perr(
                text.lines().count(),
                format!("expected {} values, found {}", rows * cols, values.len()),
            ));
        }
        let origin = (yll + (rows as f64 - 0.5) * cell, xll + 0.5 * cell);
        let mut r = Self::new(metric, origin, cell, rows, cols, values)?;
        r.nodata = header.get("nodata_value").copied();
        r.date = date.to_string();
        Ok(r)
    }

    pub fn load_esri(path: impl AsRef<Path>, metric: Metric, date: &str) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PspsError::io(path, e))?;
        Self::parse_esri(&text, metric, date, path)
    }

    pub fn to_esri(&self) -> String {
        let cs = self.cell_size;
        let mut out = format!(
            "ncols {}\nnrows {}\nxllcorner {}\nyllcorner {}\ncellsize {}\nNODATA_value {}\n",
            self.cols,
            self.rows,
            self.origin.1 - 0.5 * cs,
            self.origin.0 - (self.rows as f64 - 0.5) * cs,
            cs,
            self.nodata.unwrap_or(-9999.0)
        );
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|c| self.raw(r, c).to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn raw(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    /// Sanitized value of a cell; NODATA cells read as zero.
    pub fn value(&self, r: usize, c: usize) -> f64 {
        let v = self.raw(r, c);
        if self.nodata == Some(v) {
            return 0.0;
        }
        sanitize_metric(v, self.metric).0
    }

    pub fn repaired_cells(&self) -> usize {
        self.values
            .iter()
            .filter(|&&v| self.nodata != Some(v) && sanitize_metric(v, self.metric).1)
            .count()
    }

    /// Cell containing a coordinate; points on the outer edge belong to the
    /// adjacent border cell.
    pub fn cell_of(&self, lat: f64, lon: f64) -> Result<Cell> {
        let cs = self.cell_size;
        let fr = (self.origin.0 + 0.5 * cs - lat) / cs;
        let fc = (lon - (self.origin.1 - 0.5 * cs)) / cs;
        let slack = 1e-9;
        if !(fr >= -slack && fr <= self.rows as f64 + slack && fc >= -slack && fc <= self.cols as f64 + slack) {
            return Err(PspsError::OutOfExtent { lat, lon });
        }
        let r = (fr.max(0.0).floor() as usize).min(self.rows - 1);
        let c = (fc.max(0.0).floor() as usize).min(self.cols - 1);
        Ok((r, c))
    }

    /// The 2x2 block of cells whose centers bracket the coordinate.
    pub fn bracketing_block(&self, lat: f64, lon: f64) -> Result<[Cell; 4]> {
        self.cell_of(lat, lon)?;
        let fr = (self.origin.0 - lat) / self.cell_size;
        let fc = (lon - self.origin.1) / self.cell_size;
        let start = |f: f64, n: usize| -> (usize, usize) {
            if n == 1 {
                return (0, 0);
            }
            let s = (f.floor().max(0.0) as usize).min(n - 2);
            (s, s + 1)
        };
        let (r0, r1) = start(fr, self.rows);
        let (c0, c1) = start(fc, self.cols);
        Ok([(r0, c0), (r0, c1), (r1, c0), (r1, c1)])
    }
}

/// Integer Bresenham traversal from `a` to `b` inclusive, in (row, col) space.
pub fn bresenham(a: Cell, b: Cell) -> Vec<Cell> {
    let (mut r, mut c) = (a.0 as i64, a.1 as i64);
    let (r1, c1) = (b.0 as i64, b.1 as i64);
    let dx = (c1 - c).abs();
    let dy = -(r1 - r).abs();
    let sx = if c < c1 { 1 } else { -1 };
    let sy = if r < r1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx.max(-dy) + 1) as usize);
    loop {
        out.push((r as usize, c as usize));
        if r == r1 && c == c1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            c += sx;
        }
        if e2 <= dx {
            err += dx;
            r += sy;
        }
    }
    out
}

/// Cells traversed by a line between two coordinates.
pub fn rasterize_line(endpoints: [(f64, f64); 2], raster: &RiskRaster) -> Result<Vec<Cell>> {
    let a = raster.cell_of(endpoints[0].0, endpoints[0].1)?;
    let b = raster.cell_of(endpoints[1].0, endpoints[1].1)?;
    Ok(bresenham(a, b))
}

/// Mean sanitized metric over the 2x2 block bracketing the bus.
pub fn bus_metric(lat: f64, lon: f64, raster: &RiskRaster) -> Result<f64> {
    let block = raster.bracketing_block(lat, lon)?;
    Ok(block.iter().map(|&(r, c)| raster.value(r, c)).sum::<f64>() / 4.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub value_lo: f64,
    pub value_hi: f64,
    pub mean_owip: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityTable {
    pub metric: Metric,
    pub bins: Vec<ReliabilityBin>,
}

impl ReliabilityTable {
    pub fn new(metric: Metric, bins: Vec<ReliabilityBin>) -> Result<Self> {
        if bins.is_empty() {
            return Err(PspsError::Validation("reliability table has no bins".into()));
        }
        for (k, b) in bins.iter().enumerate() {
            if !(b.value_lo < b.value_hi) {
                return Err(PspsError::Validation(format!("bin {k}: value_lo must be below value_hi")));
            }
            if !(0.0..=1.0).contains(&b.mean_owip) {
                return Err(PspsError::Validation(format!("bin {k}: mean_owip outside [0, 1]")));
            }
            if k > 0 && bins[k - 1].value_hi != b.value_lo {
                return Err(PspsError::Validation(format!(
                    "bin {k}: starts at {} but previous bin ends at {}",
                    b.value_lo,
                    bins[k - 1].value_hi
                )));
            }
        }
        if bins[0].value_lo > 0.0 || bins[bins.len() - 1].value_hi < metric.max_value() {
            return Err(PspsError::Validation(format!(
                "bins must cover [0, {}]",
                metric.max_value()
            )));
        }
        Ok(Self { metric, bins })
    }

    /// Evenly spaced bins over the metric range with mean OWIP rising
    /// linearly from 0 in the first bin to 1e-5 in the last.
    pub fn synthetic_linear(metric: Metric, nbins: usize) -> Self {
        let nbins = nbins.max(2);
        let width = metric.max_value() / nbins as f64;
        let bins = (0..nbins)
            .map(|k| ReliabilityBin {
                value_lo: k as f64 * width,
                value_hi: if k + 1 == nbins { metric.max_value() } else { (k + 1) as f64 * width },
                mean_owip: 1e-5 * k as f64 / (nbins - 1) as f64,
            })
            .collect();
        Self { metric, bins }
    }

    pub fn load_csv(path: impl AsRef<Path>, metric: Metric) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut bins = Vec::new();
        for rec in rdr.deserialize() {
            let bin: ReliabilityBin = rec.map_err(|e| csv_error(path, e))?;
            bins.push(bin);
        }
        Self::new(metric, bins)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        for b in &self.bins {
            w.serialize(b).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| PspsError::io(path, e))
    }

    /// Mean OWIP of the bin holding `value`. Bins are closed on the upper
    /// edge, so a boundary value belongs to the lower bin; the first bin
    /// also includes its lower edge.
    pub fn lookup(&self, value: f64) -> Result<f64> {
        let first = &self.bins[0];
        if value == first.value_lo {
            return Ok(first.mean_owip);
        }
        self.bins
            .iter()
            .find(|b| value > b.value_lo && value <= b.value_hi)
            .map(|b| b.mean_owip)
            .ok_or(PspsError::NoBin(value))
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> PspsError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    PspsError::Parse {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

pub fn metric_to_wip(value: f64, table: &ReliabilityTable) -> Result<f64> {
    table.lookup(value)
}

/// `1 - prod(1 - p_k)`, cells treated as independent.
pub fn line_ignition_probability(cell_wips: &[f64]) -> f64 {
    let log_survive: f64 = cell_wips.iter().map(|&p| (-p).ln_1p()).sum();
    -log_survive.exp_m1()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineRisk {
    pub line_id: usize,
    pub pi: Vec<f64>,
    pub log_pi: Vec<f64>,
    pub log_one_minus_pi: Vec<f64>,
    #[serde(default)]
    pub cells: Vec<Cell>,
    /// Aggregated raw metric of the line, used by WFPI-sum budgets.
    #[serde(default)]
    pub metric_value: f64,
}

impl LineRisk {
    /// Risk held constant over `horizon` steps.
    pub fn constant(line_id: usize, pi: f64, horizon: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi) {
            return Err(PspsError::Validation(format!(
                "line {line_id}: ignition probability {pi} outside [0, 1]"
            )));
        }
        let log_pi = if pi > 0.0 { pi.ln() } else { LOG_ZERO_SENTINEL };
        let log_q = if pi < 1.0 { (-pi).ln_1p() } else { LOG_ZERO_SENTINEL };
        Ok(Self {
            line_id,
            pi: vec![pi; horizon],
            log_pi: vec![log_pi; horizon],
            log_one_minus_pi: vec![log_q; horizon],
            cells: Vec::new(),
            metric_value: 0.0,
        })
    }

    pub fn is_zero_risk(&self) -> bool {
        self.pi.iter().all(|&p| p == 0.0)
    }

    pub fn horizon(&self) -> usize {
        self.pi.len()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Bresenham cells unioned with both endpoint-bus 2x2 blocks.
    #[default]
    BresenhamUnion,
    /// Larger of the two endpoint-bus metrics.
    EndpointMax,
}

pub fn build_line_risk(
    net: &PowerNetwork,
    raster: &RiskRaster,
    table: &ReliabilityTable,
    mode: Aggregation,
) -> Result<Vec<LineRisk>> {
    let mut out = Vec::with_capacity(net.lines.len());
    for line in &net.lines {
        let from = &net.buses[net.bus_index(line.from_bus)];
        let to = &net.buses[net.bus_index(line.to_bus)];
        let mut cells: Vec<Cell> = Vec::new();
        cells.extend(raster.bracketing_block(from.latitude, from.longitude)?);
        cells.extend(raster.bracketing_block(to.latitude, to.longitude)?);
        let (pi, metric_value) = match mode {
            Aggregation::BresenhamUnion => {
                cells.extend(rasterize_line(line.endpoints, raster)?);
                cells.sort_unstable();
                cells.dedup();
                let mut wips = Vec::with_capacity(cells.len());
                let mut max_value: f64 = 0.0;
                for &(r, c) in &cells {
                    let v = raster.value(r, c);
                    max_value = max_value.max(v);
                    wips.push(metric_to_wip(v, table)?);
                }
                (line_ignition_probability(&wips), max_value)
            }
            Aggregation::EndpointMax => {
                cells.sort_unstable();
                cells.dedup();
                let v = bus_metric(from.latitude, from.longitude, raster)?
                    .max(bus_metric(to.latitude, to.longitude, raster)?);
                (metric_to_wip(v, table)?, v)
            }
        };
        let mut lr = LineRisk::constant(line.id, pi, net.horizon)?;
        lr.cells = cells;
        lr.metric_value = metric_value;
        out.push(lr);
    }
    Ok(out)
}

pub fn load_line_risk(path: impl AsRef<Path>) -> Result<Vec<LineRisk>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| PspsError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PspsError::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn save_line_risk(risk: &[LineRisk], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(risk).expect("line risk serializes");
    std::fs::write(path, text + "\n").map_err(|e| PspsError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: usize, cols: usize, values: Vec<f64>) -> RiskRaster {
        RiskRaster::new(Metric::Wfpi, (10.0, 20.0), 1.0, rows, cols, values).unwrap()
    }

    #[test]
    fn sanitize_examples() {
        assert_eq!(sanitize_metric(251.0, Metric::Wfpi), (0.0, false));
        assert_eq!(sanitize_metric(75.0, Metric::Wfpi), (75.0, false));
        assert_eq!(sanitize_metric(-3.0, Metric::Wfpi), (0.0, true));
        assert_eq!(sanitize_metric(f64::NAN, Metric::Wlfp), (0.0, true));
        assert_eq!(sanitize_metric(0.5, Metric::Wlfp), (1e-3, true));
    }

    #[test]
    fn bresenham_examples() {
        assert_eq!(bresenham((0, 0), (3, 3)), vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert_eq!(bresenham((0, 0), (0, 4)), (0..5).map(|c| (0, c)).collect::<Vec<_>>());
        // traced by hand with err = dx + dy
        assert_eq!(
            bresenham((0, 0), (5, 2)),
            vec![(0, 0), (1, 0), (2, 1), (3, 1), (4, 2), (5, 2)]
        );
        assert_eq!(bresenham((2, 2), (2, 2)), vec![(2, 2)]);
    }

    #[test]
    fn bus_metric_averages_bracketing_block() {
        // centers at lat 10, 9 and lon 20, 21
        let r = grid(2, 2, vec![10.0, 20.0, 30.0, 40.0]);
        assert_eq!(bus_metric(9.5, 20.5, &r).unwrap(), 25.0);
        let r = grid(2, 2, vec![100.0, 251.0, 50.0, 50.0]);
        assert_eq!(bus_metric(9.5, 20.5, &r).unwrap(), 50.0);
        assert!(matches!(bus_metric(30.0, 20.5, &r), Err(PspsError::OutOfExtent { .. })));
    }

    #[test]
    fn rasterize_rejects_points_outside() {
        let r = grid(3, 3, vec![0.0; 9]);
        assert!(rasterize_line([(10.0, 20.0), (8.0, 22.0)], &r).is_ok());
        assert!(rasterize_line([(10.0, 20.0), (5.0, 22.0)], &r).is_err());
    }

    #[test]
    fn table_lookup_boundaries() {
        let t = ReliabilityTable::new(
            Metric::Wfpi,
            vec![
                ReliabilityBin { value_lo: 0.0, value_hi: 50.0, mean_owip: 0.0 },
                ReliabilityBin { value_lo: 50.0, value_hi: 100.0, mean_owip: 2e-6 },
                ReliabilityBin { value_lo: 100.0, value_hi: 150.0, mean_owip: 5e-6 },
            ],
        )
        .unwrap();
        assert_eq!(metric_to_wip(0.0, &t).unwrap(), 0.0);
        assert_eq!(metric_to_wip(75.0, &t).unwrap(), 2e-6);
        assert_eq!(metric_to_wip(100.0, &t).unwrap(), 2e-6);
        assert!(matches!(metric_to_wip(151.0, &t), Err(PspsError::NoBin(_))));
    }

    #[test]
    fn synthetic_table_is_valid() {
        let t = ReliabilityTable::synthetic_linear(Metric::Wfpi, 16);
        ReliabilityTable::new(t.metric, t.bins.clone()).unwrap();
        assert_eq!(t.bins[15].mean_owip, 1e-5);
        assert_eq!(t.lookup(150.0).unwrap(), 1e-5);
    }

    #[test]
    fn ignition_examples() {
        assert_eq!(line_ignition_probability(&[0.0, 0.0, 0.0]), 0.0);
        assert!((line_ignition_probability(&[0.5, 0.5]) - 0.75).abs() < 1e-15);
        let direct = 1.0 - (1.0f64 - 1e-6).powi(10);
        assert!((line_ignition_probability(&[1e-6; 10]) - direct).abs() < 1e-15);
        assert_eq!(line_ignition_probability(&[1.0, 0.2]), 1.0);
    }

    #[test]
    fn esri_round_trip() {
        let mut r = grid(2, 3, vec![1.0, 2.0, 3.0, 4.0, -9999.0, 6.0]);
        r.nodata = Some(-9999.0);
        let back = RiskRaster::parse_esri(&r.to_esri(), Metric::Wfpi, "", Path::new("x.asc")).unwrap();
        assert_eq!(back.values, r.values);
        assert!((back.origin.0 - r.origin.0).abs() < 1e-12);
        assert_eq!(back.value(1, 1), 0.0);
        assert_eq!(back.repaired_cells(), 0);
    }
}
