//! Grocer distribution data: items, customers and suppliers.

use crate::error::{ChatterError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ItemRecord {
    pub item_id: usize,
    pub name: String,
    /// Inventory carrying cost per unit time.
    pub inv_carry_cost: f64,
    /// Penalty per unit time for unmet demand.
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CustomerRecord {
    /// One-based, as printed.
    pub customer_id: usize,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupplierRecord {
    pub item_id: usize,
    pub supplier: String,
    pub unit_cost: f64,
    pub fixed_cost: f64,
    pub min_qty: f64,
    pub max_qty: f64,
}

pub const ITEM_COUNT: usize = 5;
pub const CUSTOMER_COUNT: usize = 3;
pub const SUPPLIER_COUNT: usize = 14;

const ITEMS: [(&str, f64, f64); ITEM_COUNT] = [
    ("Apple", 100.0, 10.0),
    ("Orange", 150.0, 25.0),
    ("Banana", 200.0, 39.0),
    ("Tea", 50.0, 30.0),
    ("Olive", 65.0, 25.0),
];

const IMPORTANCE: [f64; CUSTOMER_COUNT] = [1.0, 0.4, 0.25];

const SUPPLIERS: [(usize, &str, f64, f64, f64, f64); SUPPLIER_COUNT] = [
    (0, "New Hampshire", 20.0, 10.0, 7.0, 14.0),
    (0, "Colorado", 25.0, 7.0, 4.0, 11.0),
    (1, "Florida", 50.0, 10.0, 5.0, 20.0),
    (1, "California", 70.0, 5.0, 4.0, 13.0),
    (2, "Costa Rica", 20.0, 15.0, 8.0, 13.0),
    (2, "Italy", 30.0, 20.0, 2.0, 13.0),
    (2, "India", 15.0, 25.0, 6.0, 25.0),
    (3, "India", 12.0, 25.0, 2.0, 16.0),
    (3, "Sri Lanka", 11.0, 25.0, 9.0, 26.0),
    (3, "England", 20.0, 15.0, 6.0, 14.0),
    (3, "Market", 23.0, 20.0, 2.0, 18.0),
    (4, "Greece", 20.0, 15.0, 15.0, 17.0),
    (4, "Italy", 25.0, 12.0, 10.0, 22.0),
    (4, "Market", 30.0, 18.0, 11.0, 14.0),
];

pub fn items() -> Vec<ItemRecord> {
    ITEMS
        .iter()
        .enumerate()
        .map(|(item_id, &(name, inv_carry_cost, penalty))| ItemRecord {
            item_id,
            name: name.to_string(),
            inv_carry_cost,
            penalty,
        })
        .collect()
}

pub fn customers() -> Vec<CustomerRecord> {
    IMPORTANCE
        .iter()
        .enumerate()
        .map(|(i, &importance)| CustomerRecord {
            customer_id: i + 1,
            importance,
        })
        .collect()
}

pub fn suppliers() -> Vec<SupplierRecord> {
    SUPPLIERS
        .iter()
        .map(|&(item_id, supplier, unit_cost, fixed_cost, min_qty, max_qty)| SupplierRecord {
            item_id,
            supplier: supplier.to_string(),
            unit_cost,
            fixed_cost,
            min_qty,
            max_qty,
        })
        .collect()
}

pub const ITEMS_FIXTURE: &str = include_str!("../../fixtures/table1_items.csv");
pub const CUSTOMERS_FIXTURE: &str = include_str!("../../fixtures/table1_customers.csv");
pub const SUPPLIERS_FIXTURE: &str = include_str!("../../fixtures/table2_suppliers.csv");

pub const ITEMS_FIXTURE_NAME: &str = "table1_items.csv";
pub const CUSTOMERS_FIXTURE_NAME: &str = "table1_customers.csv";
pub const SUPPLIERS_FIXTURE_NAME: &str = "table2_suppliers.csv";

pub fn render_items_csv() -> String {
    let mut out = String::from("Item,Name,InvCarrCost,Penalty\n");
    for it in items() {
        out.push_str(&format!("{},{},{},{}\n", it.item_id, it.name, it.inv_carry_cost, it.penalty));
    }
    out
}

pub fn render_customers_csv() -> String {
    let mut out = String::from("Customer,Importance\n");
    for c in customers() {
        out.push_str(&format!("{},{:?}\n", c.customer_id, c.importance));
    }
    out
}

pub fn render_suppliers_csv() -> String {
    let mut out = String::from("Item,Supplier,UnitCost,FixCost,MinQty,MaxQty\n");
    for s in suppliers() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.item_id, s.supplier, s.unit_cost, s.fixed_cost, s.min_qty, s.max_qty
        ));
    }
    out
}

/// Trims cells, rewrites numeric cells in shortest round-trip form and
/// normalizes line endings to LF with a trailing newline.
pub fn canonicalize_csv(text: &str) -> String {
    let mut out = String::new();
    for line in text.lines() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<String> = line
            .split(',')
            .map(|cell| {
                let cell = cell.trim();
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => format!("{v}"),
                    _ => cell.to_string(),
                }
            })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// One fixture comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableCheck {
    pub name: &'static str,
    pub matches: bool,
    pub first_difference: Option<String>,
}

fn compare(name: &'static str, embedded: &str, fixture: &str) -> TableCheck {
    let a = canonicalize_csv(embedded);
    let b = canonicalize_csv(fixture);
    let first_difference = a
        .lines()
        .zip(b.lines())
        .find(|(x, y)| x != y)
        .map(|(x, y)| format!("embedded `{x}` vs fixture `{y}`"))
        .or_else(|| {
            (a.lines().count() != b.lines().count()).then(|| {
                format!("embedded has {} rows, fixture has {}", a.lines().count(), b.lines().count())
            })
        });
    TableCheck {
        name,
        matches: a == b,
        first_difference,
    }
}

/// Compares the embedded constants with fixture texts (in item, customer,
/// supplier order).
pub fn check_tables_against(items_csv: &str, customers_csv: &str, suppliers_csv: &str) -> Vec<TableCheck> {
    vec![
        compare(ITEMS_FIXTURE_NAME, &render_items_csv(), items_csv),
        compare(CUSTOMERS_FIXTURE_NAME, &render_customers_csv(), customers_csv),
        compare(SUPPLIERS_FIXTURE_NAME, &render_suppliers_csv(), suppliers_csv),
    ]
}

pub fn check_tables() -> Vec<TableCheck> {
    check_tables_against(ITEMS_FIXTURE, CUSTOMERS_FIXTURE, SUPPLIERS_FIXTURE)
}

/// Parses the supplier fixture back into records.
pub fn parse_suppliers_csv(text: &str) -> Result<Vec<SupplierRecord>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || ChatterError::Config(format!("supplier table line {}: malformed row `{line}`", n + 1));
        if cells.len() != 6 {
            return Err(bad());
        }
        let num = |i: usize| cells[i].parse::<f64>().map_err(|_| bad());
        let record = SupplierRecord {
            item_id: cells[0].parse().map_err(|_| bad())?,
            supplier: cells[1].to_string(),
            unit_cost: num(2)?,
            fixed_cost: num(3)?,
            min_qty: num(4)?,
            max_qty: num(5)?,
        };
        if !(record.min_qty >= 0.0 && record.min_qty <= record.max_qty) {
            return Err(bad());
        }
        out.push(record);
    }
    Ok(out)
}
