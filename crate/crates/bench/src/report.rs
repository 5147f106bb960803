//! CSV output for harness results.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file<T: Serialize>(path: &Path, rows: &[T]) -> csv::Result<()> {
    write_csv(std::fs::File::create(path)?, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Strategy, StrategyResult};

    #[test]
    fn header_and_rows() {
        let r = StrategyResult::timed(Strategy::Naive, 5, 1, 100, std::time::Duration::from_secs(2));
        let mut buf = Vec::new();
        write_csv(&mut buf, &[r]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "strategy,streams,workers,tuples,wall_ms,throughput,evaluations,pairs_compared,pairs_emitted,cost_ratio"
        );
        assert_eq!(lines.next().unwrap(), "Naive,5,1,100,2000.0,50.0,0,0,0,");
    }
}
