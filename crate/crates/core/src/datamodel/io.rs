use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use super::{Action, Event, EventLog, OfferId, OfferMeta, RegionId, ShopId, UserId};
use crate::error::{Error, Result};

pub const EVENT_HEADER: &str = "ts\tuser_id\tshop_id\toffer_id\taction\tregion_id\tprice";
pub const CATALOG_HEADER: &str =
    "offer_id\tshop_id\tname\tname_cats\tbrand\tmarket_model\tmarket_category\tmarket_vendor\tprice";

/// Data lines of a tab-separated file with a fixed header. Leading `#`
/// comment lines are skipped.
fn records<R: BufRead>(
    reader: R,
    header: &str,
    n_fields: usize,
    mut on_record: impl FnMut(usize, Vec<&str>) -> Result<()>,
) -> Result<()> {
    let mut seen_header = false;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::parse(lineno, 1, e.to_string()))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if !seen_header {
            if line.starts_with('#') {
                continue;
            }
            if line != header {
                return Err(Error::parse(lineno, 1, format!("expected header {header:?}")));
            }
            seen_header = true;
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != n_fields {
            return Err(Error::parse(
                lineno,
                fields.len().min(n_fields) + 1,
                format!("expected {n_fields} fields, found {}", fields.len()),
            ));
        }
        on_record(lineno, fields)?;
    }
    if !seen_header {
        return Err(Error::parse(1, 1, "missing header"));
    }
    Ok(())
}

fn field<T: FromStr>(fields: &[&str], line: usize, col: usize, what: &str) -> Result<T> {
    fields[col]
        .parse()
        .map_err(|_| Error::parse(line, col + 1, format!("invalid {what} {:?}", fields[col])))
}

fn price(fields: &[&str], line: usize, col: usize) -> Result<f64> {
    let p: f64 = field(fields, line, col, "price")?;
    if !p.is_finite() || p < 0.0 {
        return Err(Error::parse(line, col + 1, format!("price must be >= 0, got {p}")));
    }
    Ok(p)
}

pub fn read_event_log<R: BufRead>(reader: R) -> Result<EventLog> {
    let mut events = Vec::new();
    records(reader, EVENT_HEADER, 7, |line, f| {
        let action = Action::from_str(f[4]).map_err(|r| Error::parse(line, 5, r))?;
        events.push(Event {
            ts: field(&f, line, 0, "timestamp")?,
            user: UserId(field(&f, line, 1, "user id")?),
            shop: ShopId(field(&f, line, 2, "shop id")?),
            offer: OfferId(field(&f, line, 3, "offer id")?),
            action,
            region: RegionId(field(&f, line, 5, "region id")?),
            price: price(&f, line, 6)?,
        });
        Ok(())
    })?;
    Ok(EventLog::from_events(events))
}

pub fn load_event_log(path: impl AsRef<Path>) -> Result<EventLog> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_event_log(BufReader::new(file))
}

pub fn write_event_log<W: Write>(mut w: W, log: &EventLog, comment: Option<&str>) -> std::io::Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{EVENT_HEADER}")?;
    for e in log {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.ts, e.user, e.shop, e.offer, e.action, e.region, e.price
        )?;
    }
    w.flush()
}

pub fn read_catalog<R: BufRead>(reader: R) -> Result<Vec<OfferMeta>> {
    let mut offers = Vec::new();
    records(reader, CATALOG_HEADER, 9, |line, f| {
        let name_cats = if f[3].is_empty() {
            Vec::new()
        } else {
            f[3].split('|').map(str::to_owned).collect()
        };
        offers.push(OfferMeta {
            offer: OfferId(field(&f, line, 0, "offer id")?),
            shop: ShopId(field(&f, line, 1, "shop id")?),
            name: f[2].to_owned(),
            name_cats,
            brand: f[4].to_owned(),
            market_model: field(&f, line, 5, "market model")?,
            market_category: field(&f, line, 6, "market category")?,
            market_vendor: field(&f, line, 7, "market vendor")?,
            price: price(&f, line, 8)?,
        });
        Ok(())
    })?;
    Ok(offers)
}

pub fn load_catalog(path: impl AsRef<Path>) -> Result<Vec<OfferMeta>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_catalog(BufReader::new(file))
}

pub fn write_catalog<W: Write>(mut w: W, offers: &[OfferMeta], comment: Option<&str>) -> std::io::Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{CATALOG_HEADER}")?;
    for o in offers {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            o.offer,
            o.shop,
            o.name,
            o.name_cats.join("|"),
            o.brand,
            o.market_model,
            o.market_category,
            o.market_vendor,
            o.price
        )?;
    }
    w.flush()
}
