//! Keras-style text summaries.

use super::{CompositeSpec, ModelSpec};
use crate::error::Result;

const LINE: usize = 65;
const COLUMNS: [usize; 3] = [29, 55, 65];

pub struct SummaryRow {
    pub label: String,
    pub shape: Vec<usize>,
    pub params: usize,
}

pub trait Summarize {
    fn summary_name(&self) -> &str;
    fn summary_rows(&self) -> Result<Vec<SummaryRow>>;
    fn summary_totals(&self) -> Result<(usize, usize)>;
}

impl Summarize for ModelSpec {
    fn summary_name(&self) -> &str {
        &self.name
    }

    fn summary_rows(&self) -> Result<Vec<SummaryRow>> {
        let shapes = self.output_shapes()?;
        let counts = self.param_counts()?;
        Ok(self
            .layers
            .iter()
            .zip(shapes)
            .zip(counts)
            .map(|((l, shape), params)| SummaryRow {
                label: format!("{} ({})", l.name, l.kind.class_name()),
                shape,
                params,
            })
            .collect())
    }

    fn summary_totals(&self) -> Result<(usize, usize)> {
        Ok((self.total_params()?, self.trainable_params()?))
    }
}

impl Summarize for CompositeSpec {
    fn summary_name(&self) -> &str {
        &self.name
    }

    fn summary_rows(&self) -> Result<Vec<SummaryRow>> {
        Ok([&self.generator, &self.discriminator]
            .into_iter()
            .map(|m| {
                Ok(SummaryRow {
                    label: format!("{} (Sequential)", m.name),
                    shape: m.output_shape()?,
                    params: m.total_params()?,
                })
            })
            .collect::<Result<_>>()?)
    }

    fn summary_totals(&self) -> Result<(usize, usize)> {
        Ok((self.total_params()?, self.trainable_params()?))
    }
}

/// `1988612` -> `"1,988,612"`.
pub fn format_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn shape_text(shape: &[usize]) -> String {
    let mut s = String::from("(None");
    for d in shape {
        s.push_str(&format!(", {d}"));
    }
    s.push(')');
    s
}

fn row_line(fields: [&str; 3]) -> String {
    let mut line = String::new();
    for (field, end) in fields.iter().zip(COLUMNS) {
        line.push_str(field);
        line.truncate(end);
        while line.len() < end {
            line.push(' ');
        }
    }
    line.trim_end().to_string()
}

/// Renders the layer table followed by the three parameter totals. Per-row
/// counts are plain integers; totals use thousands separators.
pub fn summarize(model: &dyn Summarize) -> Result<String> {
    let rows = model.summary_rows()?;
    let (total, trainable) = model.summary_totals()?;
    let thin = "_".repeat(LINE);
    let thick = "=".repeat(LINE);

    let mut out = Vec::new();
    out.push(format!("Model: \"{}\"", model.summary_name()));
    out.push(thin.clone());
    out.push(row_line(["Layer (type)", "Output Shape", "Param #"]));
    out.push(thick.clone());
    for (i, r) in rows.iter().enumerate() {
        if i > 0 {
            out.push(thin.clone());
        }
        out.push(row_line([&r.label, &shape_text(&r.shape), &r.params.to_string()]));
    }
    out.push(thick);
    out.push(format!("Total params: {}", format_thousands(total)));
    out.push(format!("Trainable params: {}", format_thousands(trainable)));
    out.push(format!("Non-trainable params: {}", format_thousands(total - trainable)));
    let mut text = out.join("\n");
    text.push('\n');
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_composite, build_discriminator, build_generator, DEFAULT_IMAGE};

    #[test]
    fn thousands() {
        assert_eq!(format_thousands(0), "0");
        assert_eq!(format_thousands(999), "999");
        assert_eq!(format_thousands(4097), "4,097");
        assert_eq!(format_thousands(522_497), "522,497");
        assert_eq!(format_thousands(1_988_612), "1,988,612");
    }

    #[test]
    fn discriminator_summary() {
        let d = build_discriminator(DEFAULT_IMAGE, 1.0).unwrap();
        let s = summarize(&d).unwrap();
        assert!(s.contains("Total params: 522,497"));
        assert!(s.contains("conv2d_1 (Conv2D)            (None, 16, 16, 128)       73856"));
        assert_eq!(s.lines().last().unwrap(), "Non-trainable params: 0");
    }

    #[test]
    fn composite_summary() {
        let g = build_generator(100, DEFAULT_IMAGE, 1.0).unwrap();
        let d = build_discriminator(DEFAULT_IMAGE, 1.0).unwrap();
        let s = summarize(&build_composite(&g, &d).unwrap()).unwrap();
        assert!(s.contains("sequential_1 (Sequential)    (None, 32, 32, 3)         1466115"));
        assert!(s.contains("Total params: 1,988,612"));
        assert!(s.contains("Trainable params: 1,466,115"));
        assert_eq!(s.lines().last().unwrap(), "Non-trainable params: 522,497");
    }

    #[test]
    fn empty_model() {
        let s = summarize(&ModelSpec::new("empty", vec![3])).unwrap();
        assert!(s.contains("Total params: 0"));
        assert!(s.contains("Trainable params: 0"));
        assert!(s.ends_with("Non-trainable params: 0\n"));
    }
}
