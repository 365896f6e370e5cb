//! File formats: UTF-8 comma-separated text with a one-line versioned
//! header for networks, orders, labels, features, and routing outcomes, and
//! versioned JSON for evaluation reports and stream summaries. Reals are
//! written in Rust's shortest round-trip decimal form, so writing and
//! re-reading a file reproduces the in-memory values exactly; all writes go
//! through a temp file and rename so failures never leave partial output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::domain::{
    FulfillmentNetwork, ItemCatalogEntry, Node, NodeKind, Order, OrderLine, Point, SplitLabel,
};
use crate::eval::EvalReport;
use crate::features::{BinnedRate, FeatureCatalog, FeatureVector, CATALOG_VERSION};
use crate::router::{Route, RoutingOutcome, StreamSummary};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {detail}")]
    Format { path: String, line: usize, detail: String },
    #[error("{path}: expected '{expected}' header, got '{got}'")]
    HeaderMismatch { path: String, expected: String, got: String },
}

fn io_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::Io { path: path.display().to_string(), source }
}

fn format_err(path: &Path, line: usize, detail: impl Into<String>) -> IoError {
    IoError::Format { path: path.display().to_string(), line, detail: detail.into() }
}

/// Write bytes to `path` atomically: write a sibling temp file, then rename
/// over the destination.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), std::io::Error> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

// ---------------------------------------------------------------------------
// CSV primitives
// ---------------------------------------------------------------------------

fn quote_field(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn write_row(out: &mut String, fields: &[&str]) {
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&quote_field(f));
    }
    out.push('\n');
}

/// Split one CSV line into fields, honoring double-quote escaping.
fn split_row(line: &str) -> Result<Vec<String>, String> {
    let mut fields = Vec::new();
    let mut field = String::new();
    let mut chars = line.chars().peekable();
    let mut quoted = false;
    while let Some(c) = chars.next() {
        if quoted {
            match c {
                '"' if chars.peek() == Some(&'"') => {
                    chars.next();
                    field.push('"');
                }
                '"' => quoted = false,
                _ => field.push(c),
            }
        } else {
            match c {
                '"' if field.is_empty() => quoted = true,
                ',' => fields.push(std::mem::take(&mut field)),
                _ => field.push(c),
            }
        }
    }
    if quoted {
        return Err("unterminated quoted field".into());
    }
    fields.push(field);
    Ok(fields)
}

struct RowReader<'a> {
    path: &'a Path,
    lines: Vec<(usize, &'a str)>,
    at: usize,
}

impl<'a> RowReader<'a> {
    fn new(path: &'a Path, body: &'a str, header: &str) -> Result<RowReader<'a>, IoError> {
        let lines: Vec<(usize, &str)> = body
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let Some(&(line_no, first)) = lines.first() else {
            return Err(format_err(path, 1, "empty file"));
        };
        if first != header {
            return Err(IoError::HeaderMismatch {
                path: path.display().to_string(),
                expected: header.to_string(),
                got: lines[0].1.chars().take(60).collect(),
            });
        }
        let _ = line_no;
        Ok(RowReader { path, lines, at: 1 })
    }

    fn expect_line(&mut self, expected: &str) -> Result<(), IoError> {
        match self.lines.get(self.at) {
            Some(&(no, l)) if l == expected => {
                self.at += 1;
                let _ = no;
                Ok(())
            }
            Some(&(no, l)) => Err(format_err(self.path, no, format!("expected '{expected}', got '{l}'"))),
            None => Err(format_err(self.path, self.lines.len() + 1, format!("expected '{expected}' before end of file"))),
        }
    }

    /// Remaining rows until the next `#section` marker or end of file,
    /// dropping the per-section column header row.
    fn section_rows(&mut self, columns: usize) -> Result<Vec<(usize, Vec<String>)>, IoError> {
        // column header
        if self.at < self.lines.len() && !self.lines[self.at].1.starts_with('#') {
            self.at += 1;
        }
        let mut rows = Vec::new();
        while self.at < self.lines.len() {
            let (no, line) = self.lines[self.at];
            if line.starts_with('#') {
                break;
            }
            self.at += 1;
            let fields = split_row(line).map_err(|e| format_err(self.path, no, e))?;
            if fields.len() != columns {
                return Err(format_err(
                    self.path,
                    no,
                    format!("expected {columns} fields, got {}", fields.len()),
                ));
            }
            rows.push((no, fields));
        }
        Ok(rows)
    }

    fn finished(&self) -> bool {
        self.at >= self.lines.len()
    }
}

fn parse_f64(path: &Path, line: usize, s: &str, what: &str) -> Result<f64, IoError> {
    s.parse::<f64>()
        .map_err(|_| format_err(path, line, format!("{what}: '{s}' is not a number")))
}

fn parse_u32(path: &Path, line: usize, s: &str, what: &str) -> Result<u32, IoError> {
    s.parse::<u32>()
        .map_err(|_| format_err(path, line, format!("{what}: '{s}' is not a non-negative integer")))
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

// ---------------------------------------------------------------------------
// Network files
// ---------------------------------------------------------------------------

const NETWORK_HEADER: &str = "#splitcut network v1";

pub fn write_network(path: &Path, network: &FulfillmentNetwork) -> Result<(), IoError> {
    let mut out = String::new();
    out.push_str(NETWORK_HEADER);
    out.push('\n');

    out.push_str("#section items\n");
    write_row(&mut out, &["item_id", "weight", "price", "sfs_eligible"]);
    for item in &network.catalog {
        write_row(&mut out, &[
            &item.item_id,
            &fmt_f64(item.weight),
            &fmt_f64(item.price),
            if item.sfs_eligible { "1" } else { "0" },
        ]);
    }

    out.push_str("#section nodes\n");
    write_row(&mut out, &["node_id", "kind", "x", "y", "fixed_cost", "unit_rate"]);
    for node in &network.nodes {
        write_row(&mut out, &[
            &node.node_id,
            &node.kind.to_string(),
            &fmt_f64(node.location.x),
            &fmt_f64(node.location.y),
            &fmt_f64(node.fixed_shipment_cost),
            &fmt_f64(node.unit_rate),
        ]);
    }

    out.push_str("#section stock\n");
    write_row(&mut out, &["item_id", "node_id", "units", "clearance_saving"]);
    for (item_id, per_node) in &network.inventory {
        for (node_id, units) in per_node {
            let saving = network.clearance_saving(item_id, node_id);
            let saving_field = if saving > 0.0 { fmt_f64(saving) } else { String::new() };
            write_row(&mut out, &[item_id, node_id, &units.to_string(), &saving_field]);
        }
    }

    write_atomic(path, out.as_bytes()).map_err(|e| io_err(path, e))
}

pub fn read_network(path: &Path) -> Result<FulfillmentNetwork, IoError> {
    let body = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut reader = RowReader::new(path, &body, NETWORK_HEADER)?;
    let mut network = FulfillmentNetwork::default();

    reader.expect_line("#section items")?;
    for (no, f) in reader.section_rows(4)? {
        let sfs = match f[3].as_str() {
            "1" => true,
            "0" => false,
            other => return Err(format_err(path, no, format!("sfs_eligible: '{other}' is not 0/1"))),
        };
        network.catalog.push(ItemCatalogEntry {
            item_id: f[0].clone(),
            weight: parse_f64(path, no, &f[1], "weight")?,
            price: parse_f64(path, no, &f[2], "price")?,
            sfs_eligible: sfs,
        });
    }

    reader.expect_line("#section nodes")?;
    for (no, f) in reader.section_rows(6)? {
        let kind = match f[1].as_str() {
            "store" => NodeKind::Store,
            "fc" => NodeKind::FulfillmentCenter,
            other => return Err(format_err(path, no, format!("kind: '{other}' is not store/fc"))),
        };
        network.nodes.push(Node {
            node_id: f[0].clone(),
            kind,
            location: Point::new(
                parse_f64(path, no, &f[2], "x")?,
                parse_f64(path, no, &f[3], "y")?,
            ),
            fixed_shipment_cost: parse_f64(path, no, &f[4], "fixed_cost")?,
            unit_rate: parse_f64(path, no, &f[5], "unit_rate")?,
        });
    }

    reader.expect_line("#section stock")?;
    for (no, f) in reader.section_rows(4)? {
        let units = parse_u32(path, no, &f[2], "units")?;
        network
            .inventory
            .entry(f[0].clone())
            .or_default()
            .insert(f[1].clone(), units);
        if !f[3].is_empty() {
            let saving = parse_f64(path, no, &f[3], "clearance_saving")?;
            if saving > 0.0 {
                network
                    .clearance_saving
                    .entry(f[0].clone())
                    .or_default()
                    .insert(f[1].clone(), saving);
            }
        }
    }

    Ok(network)
}

// ---------------------------------------------------------------------------
// Order files
// ---------------------------------------------------------------------------

const ORDERS_HEADER: &str = "#splitcut orders v1";

pub fn write_orders(path: &Path, orders: &[Order]) -> Result<(), IoError> {
    let mut out = String::new();
    out.push_str(ORDERS_HEADER);
    out.push('\n');
    write_row(&mut out, &["order_id", "dest_x", "dest_y", "lines"]);
    for order in orders {
        let lines = order
            .lines
            .iter()
            .map(|l| format!("{}:{}", l.item_id, l.quantity))
            .collect::<Vec<_>>()
            .join(";");
        write_row(&mut out, &[
            &order.order_id,
            &fmt_f64(order.destination.x),
            &fmt_f64(order.destination.y),
            &lines,
        ]);
    }
    write_atomic(path, out.as_bytes()).map_err(|e| io_err(path, e))
}

pub fn read_orders(path: &Path) -> Result<Vec<Order>, IoError> {
    let body = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut reader = RowReader::new(path, &body, ORDERS_HEADER)?;
    let mut orders = Vec::new();
    for (no, f) in reader.section_rows(4)? {
        let mut lines = Vec::new();
        for pair in f[3].split(';').filter(|p| !p.is_empty()) {
            let (item, qty) = pair
                .rsplit_once(':')
                .ok_or_else(|| format_err(path, no, format!("line entry '{pair}' is not item:qty")))?;
            lines.push(OrderLine {
                item_id: item.to_string(),
                quantity: parse_u32(path, no, qty, "line quantity")?,
            });
        }
        if lines.is_empty() {
            return Err(format_err(path, no, format!("order '{}' has no lines", f[0])));
        }
        orders.push(Order {
            order_id: f[0].clone(),
            destination: Point::new(
                parse_f64(path, no, &f[1], "dest_x")?,
                parse_f64(path, no, &f[2], "dest_y")?,
            ),
            lines,
        });
    }
    if !reader.finished() {
        return Err(format_err(path, 0, "unexpected trailing section"));
    }
    Ok(orders)
}

// ---------------------------------------------------------------------------
// Label files
// ---------------------------------------------------------------------------

const LABELS_HEADER: &str = "#splitcut labels v1";

pub fn write_labels(path: &Path, labels: &[SplitLabel]) -> Result<(), IoError> {
    let mut out = String::new();
    out.push_str(LABELS_HEADER);
    out.push('\n');
    write_row(&mut out, &["order_id", "split", "nodes_used", "objective"]);
    for label in labels {
        write_row(&mut out, &[
            &label.order_id,
            if label.split { "1" } else { "0" },
            &label.nodes_used.to_string(),
            &fmt_f64(label.objective),
        ]);
    }
    write_atomic(path, out.as_bytes()).map_err(|e| io_err(path, e))
}

pub fn read_labels(path: &Path) -> Result<Vec<SplitLabel>, IoError> {
    let body = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut reader = RowReader::new(path, &body, LABELS_HEADER)?;
    let mut labels = Vec::new();
    for (no, f) in reader.section_rows(4)? {
        let split = match f[1].as_str() {
            "1" => true,
            "0" => false,
            other => return Err(format_err(path, no, format!("split: '{other}' is not 0/1"))),
        };
        labels.push(SplitLabel {
            order_id: f[0].clone(),
            split,
            nodes_used: parse_u32(path, no, &f[2], "nodes_used")?,
            objective: parse_f64(path, no, &f[3], "objective")?,
        });
    }
    Ok(labels)
}

// ---------------------------------------------------------------------------
// Feature files
// ---------------------------------------------------------------------------

const FEATURES_HEADER: &str = "#splitcut features v1";

pub fn write_features(path: &Path, features: &[FeatureVector]) -> Result<(), IoError> {
    let catalog = FeatureCatalog::canonical();
    let mut out = String::new();
    out.push_str(FEATURES_HEADER);
    out.push('\n');
    let _ = writeln!(out, "#catalog {}", catalog.version);
    let mut header: Vec<&str> = vec!["order_id"];
    header.extend(catalog.names());
    write_row(&mut out, &header);
    for fv in features {
        let mut fields: Vec<String> = Vec::with_capacity(fv.values.len() + 1);
        fields.push(fv.order_id.clone());
        fields.extend(fv.values.iter().map(|v| fmt_f64(*v)));
        let refs: Vec<&str> = fields.iter().map(|s| s.as_str()).collect();
        write_row(&mut out, &refs);
    }
    write_atomic(path, out.as_bytes()).map_err(|e| io_err(path, e))
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureVector>, IoError> {
    let body = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut reader = RowReader::new(path, &body, FEATURES_HEADER)?;
    reader.expect_line(&format!("#catalog {CATALOG_VERSION}"))?;
    let width = FeatureCatalog::canonical().len() + 1;
    let mut features = Vec::new();
    for (no, f) in reader.section_rows(width)? {
        let mut values = Vec::with_capacity(width - 1);
        for v in &f[1..] {
            values.push(parse_f64(path, no, v, "feature value")?);
        }
        features.push(FeatureVector { order_id: f[0].clone(), values });
    }
    Ok(features)
}

// ---------------------------------------------------------------------------
// Routing outcome files and stream summaries
// ---------------------------------------------------------------------------

const OUTCOMES_HEADER: &str = "#splitcut outcomes v1";

pub fn write_outcomes(path: &Path, outcomes: &[RoutingOutcome]) -> Result<(), IoError> {
    let mut out = String::new();
    out.push_str(OUTCOMES_HEADER);
    out.push('\n');
    write_row(&mut out, &[
        "order_id",
        "route",
        "nodes_used",
        "objective",
        "predicted_p_split",
        "decide_cost_units",
        "regret",
    ]);
    for o in outcomes {
        let p = o.predicted_p_split.map(fmt_f64).unwrap_or_default();
        let regret = o.regret.map(fmt_f64).unwrap_or_default();
        write_row(&mut out, &[
            &o.order_id,
            o.route.as_str(),
            &o.assignment.nodes_used.to_string(),
            &fmt_f64(o.assignment.objective),
            &p,
            &o.decide_cost_units.to_string(),
            &regret,
        ]);
    }
    write_atomic(path, out.as_bytes()).map_err(|e| io_err(path, e))
}

/// Parsed back without assignments (the outcomes file records the decision
/// trail, not the allocations); used by reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeRow {
    pub order_id: String,
    pub route: Route,
    pub nodes_used: u32,
    pub objective: f64,
    pub predicted_p_split: Option<f64>,
    pub decide_cost_units: u64,
    pub regret: Option<f64>,
}

pub fn read_outcomes(path: &Path) -> Result<Vec<OutcomeRow>, IoError> {
    let body = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut reader = RowReader::new(path, &body, OUTCOMES_HEADER)?;
    let mut rows = Vec::new();
    for (no, f) in reader.section_rows(7)? {
        let route = Route::from_str(&f[1])
            .ok_or_else(|| format_err(path, no, format!("unknown route '{}'", f[1])))?;
        rows.push(OutcomeRow {
            order_id: f[0].clone(),
            route,
            nodes_used: parse_u32(path, no, &f[2], "nodes_used")?,
            objective: parse_f64(path, no, &f[3], "objective")?,
            predicted_p_split: if f[4].is_empty() {
                None
            } else {
                Some(parse_f64(path, no, &f[4], "predicted_p_split")?)
            },
            decide_cost_units: f[5]
                .parse::<u64>()
                .map_err(|_| format_err(path, no, format!("decide_cost_units: '{}'", f[5])))?,
            regret: if f[6].is_empty() { None } else { Some(parse_f64(path, no, &f[6], "regret")?) },
        });
    }
    Ok(rows)
}

pub fn write_stream_summary(path: &Path, summary: &StreamSummary) -> Result<(), IoError> {
    let body = serde_json::to_string_pretty(summary).expect("summary serializes");
    write_atomic(path, body.as_bytes()).map_err(|e| io_err(path, e))
}

// ---------------------------------------------------------------------------
// Evaluation report files
// ---------------------------------------------------------------------------

pub fn write_eval_report(path: &Path, report: &EvalReport) -> Result<(), IoError> {
    let body = serde_json::to_string_pretty(report).expect("report serializes");
    write_atomic(path, body.as_bytes()).map_err(|e| io_err(path, e))
}

pub fn read_eval_report(path: &Path) -> Result<EvalReport, IoError> {
    let body = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&body).map_err(|e| format_err(path, e.line(), e.to_string()))
}

/// Flat coverage-accuracy curve table: one row per (model, threshold).
pub fn write_curve_table(path: &Path, report: &EvalReport) -> Result<(), IoError> {
    let mut out = String::new();
    write_row(&mut out, &["model", "threshold", "coverage", "accuracy_on_covered"]);
    for curve in &report.curves {
        for p in &curve.points {
            let acc = p.accuracy.map(fmt_f64).unwrap_or_default();
            write_row(&mut out, &[
                curve.kind.as_str(),
                &fmt_f64(p.threshold),
                &fmt_f64(p.coverage),
                &acc,
            ]);
        }
    }
    write_atomic(path, out.as_bytes()).map_err(|e| io_err(path, e))
}

/// Flat importance table: one row per (model, feature).
pub fn write_importance_table(path: &Path, report: &EvalReport) -> Result<(), IoError> {
    let mut out = String::new();
    write_row(&mut out, &["model", "feature", "importance"]);
    for imp in &report.importances {
        for (feature, value) in &imp.mean_importance {
            write_row(&mut out, &[imp.kind.as_str(), feature, &fmt_f64(*value)]);
        }
    }
    write_atomic(path, out.as_bytes()).map_err(|e| io_err(path, e))
}

/// Flat binned split-rate table for one feature.
pub fn write_binned_rates(path: &Path, feature: &str, bins: &[BinnedRate]) -> Result<(), IoError> {
    let mut out = String::new();
    write_row(&mut out, &["feature", "bin_lo", "bin_hi", "count", "split_fraction"]);
    for b in bins {
        let frac = b.split_fraction.map(fmt_f64).unwrap_or_default();
        write_row(&mut out, &[feature, &fmt_f64(b.lo), &fmt_f64(b.hi), &b.count.to_string(), &frac]);
    }
    write_atomic(path, out.as_bytes()).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_network, generate_orders, GeneratorConfig};

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn network_roundtrip_is_value_identical() {
        let config = GeneratorConfig { n_nodes: 8, n_items: 20, n_orders: 10, ..Default::default() };
        let network = generate_network(&config).unwrap();
        let dir = tmp();
        let path = dir.path().join("network.csv");
        write_network(&path, &network).unwrap();
        let back = read_network(&path).unwrap();
        assert_eq!(network, back);
    }

    #[test]
    fn orders_roundtrip_is_value_identical() {
        let config = GeneratorConfig { n_nodes: 8, n_items: 20, n_orders: 50, ..Default::default() };
        let network = generate_network(&config).unwrap();
        let orders = generate_orders(&config, &network).unwrap();
        let dir = tmp();
        let path = dir.path().join("orders.csv");
        write_orders(&path, &orders).unwrap();
        let back = read_orders(&path).unwrap();
        assert_eq!(orders, back);
    }

    #[test]
    fn writes_are_byte_deterministic() {
        let config = GeneratorConfig { n_nodes: 8, n_items: 20, n_orders: 25, ..Default::default() };
        let network = generate_network(&config).unwrap();
        let dir = tmp();
        let (p1, p2) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        write_network(&p1, &network).unwrap();
        write_network(&p2, &network).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn header_mismatch_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("orders.csv");
        fs::write(&path, "#splitcut labels v1\norder_id\n").unwrap();
        assert!(matches!(read_orders(&path), Err(IoError::HeaderMismatch { .. })));
    }

    #[test]
    fn malformed_rows_carry_line_numbers() {
        let dir = tmp();
        let path = dir.path().join("labels.csv");
        fs::write(&path, "#splitcut labels v1\norder_id,split,nodes_used,objective\no1,2,1,0.5\n")
            .unwrap();
        match read_labels(&path) {
            Err(IoError::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn quoted_fields_roundtrip() {
        let row = split_row("\"a,b\",plain,\"with \"\"quotes\"\"\"").unwrap();
        assert_eq!(row, vec!["a,b", "plain", "with \"quotes\""]);
    }

    #[test]
    fn labels_roundtrip_preserves_float_bits() {
        let labels = vec![
            SplitLabel { order_id: "o1".into(), split: true, nodes_used: 2, objective: 13.07 },
            SplitLabel {
                order_id: "o2".into(),
                split: false,
                nodes_used: 1,
                objective: 1.0 / 3.0,
            },
        ];
        let dir = tmp();
        let path = dir.path().join("labels.csv");
        write_labels(&path, &labels).unwrap();
        let back = read_labels(&path).unwrap();
        for (a, b) in labels.iter().zip(&back) {
            assert_eq!(a.objective.to_bits(), b.objective.to_bits());
        }
    }
}
