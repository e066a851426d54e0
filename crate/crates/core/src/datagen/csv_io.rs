use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{DemandPanel, PanelError, SkuRecord};
use crate::money::Cents;

pub const SKUS_HEADER: [&str; 8] = [
    "sku_id",
    "category_id",
    "unit_cost",
    "unit_price",
    "vlt_days",
    "nrt_days",
    "volatility_class",
    "value_class",
];
pub const DEMAND_HEADER: [&str; 3] = ["sku_id", "day_index", "units"];

/// Upper bound on panel length accepted from files.
const MAX_HORIZON_DAYS: u64 = 36_600;

struct Columns {
    file: &'static str,
    index: Vec<usize>,
}

impl Columns {
    fn resolve(file: &'static str, headers: &csv::StringRecord, wanted: &[&str]) -> Result<Self, PanelError> {
        let index = wanted
            .iter()
            .map(|name| {
                headers.iter().position(|h| h.trim() == *name).ok_or_else(|| PanelError::Schema {
                    file: file.into(),
                    message: format!("missing column {name:?}"),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Columns { file, index })
    }

    fn get<'r>(&self, rec: &'r csv::StringRecord, col: usize, row: u64) -> Result<&'r str, PanelError> {
        rec.get(self.index[col]).map(str::trim).ok_or_else(|| PanelError::Parse {
            file: self.file.into(),
            row,
            message: format!("missing field {}", col + 1),
        })
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(r)
}

fn row_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn parse_err(file: &str, row: u64, message: impl Into<String>) -> PanelError {
    PanelError::Parse { file: file.into(), row, message: message.into() }
}

fn csv_err(file: &str, e: csv::Error) -> PanelError {
    let row = e.position().map_or(0, |p| p.line());
    parse_err(file, row, e.to_string())
}

/// Parses `skus.csv`. Row numbers in errors are 1-based file lines.
pub fn parse_skus<R: Read>(input: R) -> Result<Vec<SkuRecord>, PanelError> {
    const FILE: &str = "skus.csv";
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(|e| csv_err(FILE, e))?.clone();
    let cols = Columns::resolve(FILE, &headers, &SKUS_HEADER)?;
    let mut skus: Vec<SkuRecord> = Vec::new();
    let mut ids: HashMap<String, u64> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(FILE, e))?;
        let row = row_of(&rec);
        let field = |c: usize| cols.get(&rec, c, row);
        let money = |c: usize| -> Result<Cents, PanelError> {
            let raw = field(c)?;
            raw.parse().map_err(|_| parse_err(FILE, row, format!("{}: invalid amount {raw:?}", SKUS_HEADER[c])))
        };
        let count = |c: usize| -> Result<u32, PanelError> {
            let raw = field(c)?;
            raw.parse().map_err(|_| parse_err(FILE, row, format!("{}: invalid count {raw:?}", SKUS_HEADER[c])))
        };
        let sku = SkuRecord {
            sku_id: field(0)?.to_string(),
            category_id: field(1)?.to_string(),
            unit_cost: money(2)?,
            unit_price: money(3)?,
            vlt_days: count(4)?,
            nrt_days: count(5)?,
            volatility_class: field(6)?.parse().map_err(|m: String| parse_err(FILE, row, m))?,
            value_class: field(7)?.parse().map_err(|m: String| parse_err(FILE, row, m))?,
        };
        sku.validate().map_err(|m| parse_err(FILE, row, m))?;
        if let Some(first) = ids.insert(sku.sku_id.clone(), row) {
            return Err(parse_err(FILE, row, format!("duplicate sku_id {} (first on row {first})", sku.sku_id)));
        }
        skus.push(sku);
    }
    Ok(skus)
}

/// Parses `demand.csv` against an already-parsed SKU list. Every
/// (sku, day) pair in `[0, T)` must appear exactly once, where `T` is one
/// past the largest day index.
pub fn parse_demand<R: Read>(input: R, skus: &[SkuRecord]) -> Result<Vec<Vec<u32>>, PanelError> {
    const FILE: &str = "demand.csv";
    let mut rdr = reader(input);
    let headers = rdr.headers().map_err(|e| csv_err(FILE, e))?.clone();
    let cols = Columns::resolve(FILE, &headers, &DEMAND_HEADER)?;
    let by_id: HashMap<&str, usize> = skus.iter().enumerate().map(|(i, s)| (s.sku_id.as_str(), i)).collect();

    let mut cells: Vec<(usize, usize, u32, u64)> = Vec::new();
    let mut horizon = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(FILE, e))?;
        let row = row_of(&rec);
        let id = cols.get(&rec, 0, row)?;
        let sku = *by_id.get(id).ok_or_else(|| parse_err(FILE, row, format!("unknown sku_id {id:?}")))?;
        let raw_day = cols.get(&rec, 1, row)?;
        let day: u64 = raw_day
            .parse()
            .map_err(|_| parse_err(FILE, row, format!("day_index: invalid value {raw_day:?}")))?;
        if day >= MAX_HORIZON_DAYS {
            return Err(parse_err(FILE, row, format!("day_index {day} exceeds supported horizon")));
        }
        let raw_units = cols.get(&rec, 2, row)?;
        let units: i64 = raw_units
            .parse()
            .map_err(|_| parse_err(FILE, row, format!("units: invalid value {raw_units:?}")))?;
        if units < 0 {
            return Err(parse_err(FILE, row, format!("negative demand {units}")));
        }
        let units = u32::try_from(units).map_err(|_| parse_err(FILE, row, format!("units {units} out of range")))?;
        horizon = horizon.max(day as usize + 1);
        cells.push((sku, day as usize, units, row));
    }

    if skus.is_empty() {
        if cells.is_empty() {
            return Ok(Vec::new());
        }
        return Err(PanelError::Schema { file: FILE.into(), message: "demand rows without SKUs".into() });
    }
    let mut demand = vec![vec![0u32; horizon]; skus.len()];
    let mut seen_row = vec![vec![0u64; horizon]; skus.len()];
    for (sku, day, units, row) in cells {
        if seen_row[sku][day] != 0 {
            return Err(parse_err(
                FILE,
                row,
                format!("duplicate row for sku {} day {day} (first on row {})", skus[sku].sku_id, seen_row[sku][day]),
            ));
        }
        seen_row[sku][day] = row.max(1);
        demand[sku][day] = units;
    }
    for (sku, rows) in seen_row.iter().enumerate() {
        if let Some(day) = rows.iter().position(|&r| r == 0) {
            return Err(PanelError::Schema {
                file: FILE.into(),
                message: format!("missing row for sku {} day {day}", skus[sku].sku_id),
            });
        }
    }
    Ok(demand)
}

pub fn write_skus<W: Write>(out: W, skus: &[SkuRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SKUS_HEADER)?;
    for s in skus {
        w.write_record([
            s.sku_id.clone(),
            s.category_id.clone(),
            s.unit_cost.to_string(),
            s.unit_price.to_string(),
            s.vlt_days.to_string(),
            s.nrt_days.to_string(),
            s.volatility_class.to_string(),
            s.value_class.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes one row per (sku, day), zeros included.
pub fn write_demand<W: Write>(out: W, panel: &DemandPanel) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DEMAND_HEADER)?;
    for (sku, row) in panel.skus.iter().zip(&panel.demand) {
        for (day, units) in row.iter().enumerate() {
            w.write_record([sku.sku_id.as_str(), &day.to_string(), &units.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn io_err(path: &Path, source: std::io::Error) -> PanelError {
    PanelError::Io { path: path.display().to_string(), source }
}

/// Loads `skus.csv` and `demand.csv` from `dir`.
pub fn load_panel(dir: &Path) -> Result<DemandPanel, PanelError> {
    let skus_path = dir.join("skus.csv");
    let demand_path = dir.join("demand.csv");
    let skus = parse_skus(File::open(&skus_path).map_err(|e| io_err(&skus_path, e))?)?;
    let demand = parse_demand(File::open(&demand_path).map_err(|e| io_err(&demand_path, e))?, &skus)?;
    DemandPanel::new(skus, demand)
}

/// Writes `skus.csv` and `demand.csv` into `dir`, creating it if needed.
pub fn save_panel(panel: &DemandPanel, dir: &Path) -> Result<(), PanelError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let write = |name: &str, f: &dyn Fn(BufWriter<File>) -> csv::Result<()>| {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        f(BufWriter::new(file)).map_err(|e| io_err(&path, std::io::Error::other(e)))
    };
    write("skus.csv", &|w| write_skus(w, &panel.skus))?;
    write("demand.csv", &|w| write_demand(w, panel))?;
    Ok(())
}
