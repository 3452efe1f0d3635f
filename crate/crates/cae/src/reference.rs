//! Published comparison numbers, shown next to measured results in reports.
//! They are never used as expected values.

/// Average optimality gap (%) per TSPLIB instance: (instance, GHPP, ReEvo, CAE).
pub const INSTANCE_GAPS: [(&str, f64, f64, f64); 21] = [
    ("ts225", 7.7, 6.6, 4.6),
    ("eil51", 10.2, 6.5, 3.5),
    ("d657", 16.3, 16.0, 14.8),
    ("rat99", 14.1, 12.4, 11.7),
    ("d493", 15.6, 13.4, 10.6),
    ("kroA150", 15.6, 11.6, 10.1),
    ("rl1889", 21.1, 17.5, 15.8),
    ("kroB100", 14.1, 12.2, 7.0),
    ("fl1577", 17.6, 12.1, 9.8),
    ("u1817", 21.2, 16.6, 13.0),
    ("kroC100", 16.2, 15.9, 6.8),
    ("u724", 15.5, 16.9, 15.1),
    ("d1655", 18.7, 17.5, 12.5),
    ("ch130", 14.8, 9.4, 7.8),
    ("pr264", 24.0, 16.8, 15.5),
    ("bier127", 15.6, 10.8, 6.4),
    ("pr299", 18.2, 20.6, 18.8),
    ("pr226", 15.5, 18.0, 8.5),
    ("lin318", 14.3, 16.6, 16.3),
    ("fl417", 22.7, 19.2, 17.3),
    ("pr439", 21.4, 19.3, 13.7),
];

/// Best-known tour lengths for the same instances.
pub const BEST_KNOWN: [(&str, f64); 21] = [
    ("ts225", 126643.0),
    ("eil51", 426.0),
    ("d657", 48912.0),
    ("rat99", 1211.0),
    ("d493", 35002.0),
    ("kroA150", 26524.0),
    ("rl1889", 316536.0),
    ("kroB100", 22141.0),
    ("fl1577", 22249.0),
    ("u1817", 57201.0),
    ("kroC100", 20749.0),
    ("u724", 41910.0),
    ("d1655", 62128.0),
    ("ch130", 6110.0),
    ("pr264", 49135.0),
    ("bier127", 118282.0),
    ("pr299", 48191.0),
    ("pr226", 80369.0),
    ("lin318", 42029.0),
    ("fl417", 11861.0),
    ("pr439", 107217.0),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub obj: f64,
    pub gap: f64,
    pub time: f64,
}

const fn c(obj: f64, gap: f64, time: f64) -> Cell {
    Cell { obj, gap, time }
}

pub const SIZES: [&str; 3] = ["TSP20", "TSP50", "TSP100"];

/// Objective, gap (%) and time per method on random uniform instances, one
/// cell per entry of [`SIZES`].
pub const METHOD_RESULTS: [(&str, [Cell; 3]); 12] = [
    ("GA", [c(6.1, 0.0, 0.4), c(18.2, 0.0, 1.3), c(40.8, 0.0, 2.3)]),
    ("GA+EOH", [c(6.0, 1.9, 0.3), c(17.8, 2.3, 0.8), c(40.5, 0.6, 2.0)]),
    ("GA+ReEvo", [c(6.0, 1.9, 0.3), c(17.9, 1.3, 0.8), c(40.6, 0.5, 2.1)]),
    ("GA+CAE", [c(5.7, 6.6, 0.2), c(16.3, 10.3, 0.6), c(36.6, 10.2, 1.3)]),
    ("ACO", [c(3.8, 0.0, 2.1), c(5.9, 0.0, 7.6), c(8.5, 0.0, 17.9)]),
    ("ACO+EOH", [c(3.9, -0.7, 3.5), c(5.9, 0.8, 9.1), c(8.5, 0.3, 17.4)]),
    ("ACO+ReEvo", [c(3.9, -0.2, 2.5), c(5.9, 0.3, 7.6), c(8.4, 0.7, 12.2)]),
    ("ACO+CAE", [c(3.8, 0.5, 2.5), c(5.8, 1.8, 6.4), c(8.4, 1.6, 13.7)]),
    ("KGLS", [c(4.4, 0.0, 4.1), c(6.7, 0.0, 10.3), c(9.3, 0.0, 26.8)]),
    ("KGLS+EOH", [c(4.4, 0.6, 5.6), c(6.8, -0.2, 14.0), c(9.2, 0.4, 28.8)]),
    ("KGLS+ReEvo", [c(4.4, 0.2, 5.9), c(6.8, -1.0, 14.9), c(9.3, -0.3, 20.9)]),
    ("KGLS+CAE", [c(3.9, 11.2, 3.5), c(5.9, 11.7, 9.0), c(8.5, 8.2, 28.0)]),
];

/// Published gaps for `instance`, case-insensitive: (GHPP, ReEvo, CAE).
pub fn instance_gaps(instance: &str) -> Option<(f64, f64, f64)> {
    INSTANCE_GAPS
        .iter()
        .find(|(name, ..)| name.eq_ignore_ascii_case(instance))
        .map(|&(_, a, b, c)| (a, b, c))
}

pub fn best_known(instance: &str) -> Option<f64> {
    BEST_KNOWN
        .iter()
        .find(|(name, _)| name.eq_ignore_ascii_case(instance))
        .map(|&(_, v)| v)
}

/// Random instances are named `tsp<n>_...`; returns the matching size column.
pub fn size_column(instance: &str) -> Option<usize> {
    let lower = instance.to_ascii_lowercase();
    SIZES
        .iter()
        .position(|s| {
            let s = s.to_ascii_lowercase();
            lower == s || lower.starts_with(&format!("{s}_"))
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookups() {
        assert_eq!(instance_gaps("TS225"), Some((7.7, 6.6, 4.6)));
        assert_eq!(instance_gaps("berlin52"), None);
        assert_eq!(best_known("eil51"), Some(426.0));
        assert_eq!(size_column("tsp50_seed3"), Some(1));
        assert_eq!(size_column("tsp500"), None);
    }

    #[test]
    fn tables_cover_the_same_instances() {
        for ((a, ..), (b, _)) in INSTANCE_GAPS.iter().zip(&BEST_KNOWN) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn baseline_rows_have_zero_gap() {
        for (name, cells) in METHOD_RESULTS.iter().filter(|(n, _)| !n.contains('+')) {
            assert!(cells.iter().all(|c| c.gap == 0.0), "{name}");
        }
    }
}
