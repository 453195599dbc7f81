//! Per-thread timing marks rendered as a whitespace-separated table.

use parking_lot::Mutex;

struct Marks {
    labels: Vec<String>,
    rows: Vec<Vec<Option<f64>>>,
}

pub struct Bench {
    enabled: bool,
    n: usize,
    marks: Mutex<Marks>,
}

impl Bench {
    pub fn new(n: usize, enabled: bool) -> Self {
        Bench { enabled, n, marks: Mutex::new(Marks { labels: Vec::new(), rows: vec![Vec::new(); n] }) }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    /// Records `secs` for local thread `t` under `label`; the latest mark wins.
    pub fn mark(&self, t: usize, label: &str, secs: f64) {
        if !self.enabled {
            return;
        }
        let mut m = self.marks.lock();
        let col = match m.labels.iter().position(|l| l == label) {
            Some(c) => c,
            None => {
                m.labels.push(label.to_string());
                m.labels.len() - 1
            }
        };
        let row = &mut m.rows[t];
        if row.len() <= col {
            row.resize(col + 1, None);
        }
        row[col] = Some(secs);
    }

    pub fn reset(&self) {
        let mut m = self.marks.lock();
        m.labels.clear();
        m.rows = vec![Vec::new(); self.n];
    }

    /// A `#` header of labels in first-seen order, then one row per thread.
    pub fn render(&self) -> String {
        let m = self.marks.lock();
        let mut out = String::from("# thread");
        for l in &m.labels {
            out.push(' ');
            out.push_str(l);
        }
        out.push('\n');
        for (t, row) in m.rows.iter().enumerate() {
            out.push_str(&t.to_string());
            for c in 0..m.labels.len() {
                match row.get(c).copied().flatten() {
                    Some(s) => out.push_str(&format!(" {s:.6}")),
                    None => out.push_str(" ?"),
                }
            }
            out.push('\n');
        }
        out
    }
}
