//! Output files of a run: market series, fund panel and JSON side files.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::engine::RunRecord;
use crate::error::Result;

pub const MARKET_HEADER: [&str; 10] = [
    "t",
    "price",
    "fundamental_value",
    "dividend",
    "volume",
    "ws_nt",
    "ws_vi",
    "ws_tf",
    "admin_position",
    "clearing_iters",
];

pub const FUNDS_HEADER: [&str; 8] = ["t", "fund_id", "style", "wealth", "cash", "shares", "signal", "flow"];

pub fn write_market_csv<W: Write>(record: &RunRecord, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MARKET_HEADER)?;
    for d in &record.days {
        w.write_record([
            d.t.to_string(),
            d.price.to_string(),
            d.fundamental_value.to_string(),
            d.dividend.to_string(),
            d.volume.to_string(),
            d.wealth_shares[0].to_string(),
            d.wealth_shares[1].to_string(),
            d.wealth_shares[2].to_string(),
            d.admin_position.to_string(),
            d.clearing_iters.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_funds_csv<W: Write>(record: &RunRecord, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(FUNDS_HEADER)?;
    for r in &record.panel {
        w.write_record([
            r.t.to_string(),
            r.fund_id.to_string(),
            r.style.label().to_string(),
            r.wealth.to_string(),
            r.cash.to_string(),
            r.shares.to_string(),
            r.signal.to_string(),
            r.flow.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| crate::Error::Io(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// `market.csv` and `funds.csv` under `dir`.
pub fn write_series(record: &RunRecord, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_market_csv(record, std::io::BufWriter::new(fs::File::create(dir.join("market.csv"))?))?;
    write_funds_csv(record, std::io::BufWriter::new(fs::File::create(dir.join("funds.csv"))?))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::SimConfig;

    #[test]
    fn headers_and_row_counts() {
        let mut c = SimConfig::default().with_days(5);
        c.population.n_nt = 1;
        c.population.n_vi = 1;
        c.population.n_tf = 1;
        let rec = crate::run(c).unwrap();
        let mut m = Vec::new();
        write_market_csv(&rec, &mut m).unwrap();
        let m = String::from_utf8(m).unwrap();
        assert_eq!(
            m.lines().next().unwrap(),
            "t,price,fundamental_value,dividend,volume,ws_nt,ws_vi,ws_tf,admin_position,clearing_iters"
        );
        assert_eq!(m.lines().count(), 6);
        let mut f = Vec::new();
        write_funds_csv(&rec, &mut f).unwrap();
        let f = String::from_utf8(f).unwrap();
        assert_eq!(f.lines().next().unwrap(), "t,fund_id,style,wealth,cash,shares,signal,flow");
        assert_eq!(f.lines().count(), 1 + 5 * 3);
    }

    #[test]
    fn empty_run_writes_headers_only() {
        let rec = crate::run(SimConfig::default().with_days(0)).unwrap();
        let mut m = Vec::new();
        write_market_csv(&rec, &mut m).unwrap();
        assert_eq!(String::from_utf8(m).unwrap().lines().count(), 1);
    }
}
