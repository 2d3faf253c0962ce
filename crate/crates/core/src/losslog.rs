//! CSV loss log: `epoch,e_pl,sfl_<scale>...,e_total`, one row per epoch,
//! reals printed with 9 significant digits.

use std::io::Write;

use crate::error::{Error, Result};
use crate::loss::LossReport;

pub fn csv_header(scales: &[f64]) -> String {
    let mut header = String::from("epoch,e_pl");
    for s in scales {
        header.push_str(&format!(",sfl_{s}"));
    }
    header.push_str(",e_total\n");
    header
}

pub fn csv_row(epoch: usize, report: &LossReport) -> String {
    let mut row = format!("{epoch},{:.8e}", report.e_pl);
    for b in &report.e_sfl_per_band {
        row.push_str(&format!(",{b:.8e}"));
    }
    row.push_str(&format!(",{:.8e}\n", report.e_total));
    row
}

/// Streams rows to a writer, flushing after each epoch so logs survive
/// interrupted runs.
pub struct LossLog<W: Write> {
    writer: W,
}

impl<W: Write> LossLog<W> {
    pub fn new(mut writer: W, scales: &[f64]) -> Result<Self> {
        writer
            .write_all(csv_header(scales).as_bytes())
            .map_err(|e| Error::io("loss log", e))?;
        Ok(LossLog { writer })
    }

    pub fn record(&mut self, epoch: usize, report: &LossReport) -> Result<()> {
        self.writer
            .write_all(csv_row(epoch, report).as_bytes())
            .map_err(|e| Error::io("loss log", e))?;
        self.writer.flush().map_err(|e| Error::io("loss log", e))
    }

    pub fn into_inner(self) -> W {
        self.writer
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_names_the_default_bands() {
        assert_eq!(
            csv_header(&[0.8, 1.6, 3.2]),
            "epoch,e_pl,sfl_0.8,sfl_1.6,sfl_3.2,e_total\n"
        );
    }

    #[test]
    fn rows_use_nine_significant_digits() {
        let report = LossReport::new(
            0.123456789123,
            vec![0.0189, 0.00569, 0.00137],
            &[100.0f64, 10.0, 10.0],
        );
        let row = csv_row(3, &report);
        assert!(row.starts_with("3,1.23456789e-1,1.89000000e-2,"), "{row}");
        assert!(row.ends_with("\n"));
        assert_eq!(row.matches(',').count(), 5);
    }

    #[test]
    fn log_streams_header_and_rows() {
        let mut log = LossLog::new(Vec::new(), &[0.8, 1.6, 3.2]).unwrap();
        let report = LossReport::new(1.0, vec![0.1, 0.2, 0.3], &[100.0f64, 10.0, 10.0]);
        log.record(1, &report).unwrap();
        log.record(2, &report).unwrap();
        let text = String::from_utf8(log.into_inner()).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("epoch,e_pl,sfl_0.8"));
    }
}
