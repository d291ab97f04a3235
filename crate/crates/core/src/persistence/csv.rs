use std::io::Write;

use crate::error::Result;
use crate::training::{HistoryRecord, MagnitudeRecord, SweepRecord};

/// A row type that can be written by [`write_csv`].
pub trait CsvRecord {
    const HEADER: &'static [&'static str];

    fn fields(&self) -> Vec<String>;
}

/// 17 significant digits, enough to parse back to the identical `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header row followed by one row per record.
pub fn write_csv<R: CsvRecord>(records: &[R], sink: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(sink);
    w.write_record(R::HEADER)?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

impl CsvRecord for SweepRecord {
    const HEADER: &'static [&'static str] = &["lambda", "rank", "params", "final_eval_loss"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.lambda.to_string(),
            self.rank.to_string(),
            self.params.to_string(),
            format_float(self.final_eval_loss),
        ]
    }
}

impl CsvRecord for HistoryRecord {
    const HEADER: &'static [&'static str] = &["step", "train_loss", "eval_loss"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.step.to_string(),
            format_float(self.train_loss),
            format_float(self.eval_loss),
        ]
    }
}

impl CsvRecord for MagnitudeRecord {
    const HEADER: &'static [&'static str] = &["layer", "tensor", "channel", "mean_abs", "max_abs"];

    fn fields(&self) -> Vec<String> {
        vec![
            self.layer.to_string(),
            self.tensor.name().to_string(),
            self.channel.to_string(),
            format_float(self.mean_abs),
            format_float(self.max_abs),
        ]
    }
}
