//! The ordering-strip figure: one colored block per poem, best mean
//! score on the left, colored by ground-truth category. A perfect run
//! shows three contiguous color bands.

use crate::corpus::Category;
use crate::scoring::OrderedSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StripFormat {
    /// ANSI-colored blocks for the terminal.
    Terminal,
    /// A standalone SVG document.
    Svg,
}

const SVG_BLOCK_W: usize = 10;
const SVG_BLOCK_H: usize = 28;
const SVG_MARGIN: usize = 12;

fn fill(category: Category) -> &'static str {
    match category {
        Category::Good => "#4477aa",
        Category::Medium => "#44aa77",
        Category::Bad => "#cc4444",
    }
}

fn ansi(category: Category) -> &'static str {
    match category {
        Category::Good => "\x1b[34m",   // blue
        Category::Medium => "\x1b[32m", // green
        Category::Bad => "\x1b[31m",    // red
    }
}

/// Renders the strip for a sequence, annotated with the sequence's rank
/// correlation against ground truth when one is available.
///
/// # Panics
/// If the sequence is empty.
pub fn emit_ordering_strip(
    sequence: &OrderedSequence,
    src: Option<f64>,
    format: StripFormat,
) -> String {
    assert!(
        !sequence.entries.is_empty(),
        "cannot render a strip for an empty sequence"
    );
    match format {
        StripFormat::Terminal => terminal_strip(sequence, src),
        StripFormat::Svg => svg_strip(sequence, src),
    }
}

fn terminal_strip(sequence: &OrderedSequence, src: Option<f64>) -> String {
    const RESET: &str = "\x1b[0m";
    let mut out = String::new();
    for entry in &sequence.entries {
        out.push_str(ansi(entry.category));
        out.push('█');
    }
    out.push_str(RESET);
    out.push('\n');
    out.push_str("highest mean score on the left\n");
    for category in Category::ALL {
        out.push_str(ansi(category));
        out.push('█');
        out.push_str(RESET);
        out.push(' ');
        out.push_str(category.label());
        out.push(' ');
    }
    out.push('\n');
    if let Some(rho) = src {
        out.push_str(&format!("SRC = {rho:.2}\n"));
    }
    out
}

fn svg_strip(sequence: &OrderedSequence, src: Option<f64>) -> String {
    let n = sequence.entries.len();
    let strip_w = n * SVG_BLOCK_W;
    let width = strip_w + 2 * SVG_MARGIN;
    let legend_y = SVG_MARGIN + SVG_BLOCK_H + 18;
    let height = legend_y + 40;

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n"
    ));
    out.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>\n"
    ));
    for (i, entry) in sequence.entries.iter().enumerate() {
        let x = SVG_MARGIN + i * SVG_BLOCK_W;
        out.push_str(&format!(
            "  <rect x=\"{x}\" y=\"{y}\" width=\"{w}\" height=\"{h}\" fill=\"{fill}\">\
             <title>{id} (mean {mean})</title></rect>\n",
            y = SVG_MARGIN,
            w = SVG_BLOCK_W,
            h = SVG_BLOCK_H,
            fill = fill(entry.category),
            id = xml_escape(&entry.poem_id),
            mean = entry.mean_score,
        ));
    }
    out.push_str(&format!(
        "  <text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">\
         highest mean score on the left</text>\n",
        x = SVG_MARGIN,
        y = SVG_MARGIN + SVG_BLOCK_H + 14,
    ));
    let mut legend_x = SVG_MARGIN;
    for category in Category::ALL {
        out.push_str(&format!(
            "  <rect x=\"{legend_x}\" y=\"{y}\" width=\"12\" height=\"12\" fill=\"{fill}\"/>\n",
            y = legend_y,
            fill = fill(category),
        ));
        out.push_str(&format!(
            "  <text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"12\" \
             fill=\"#111111\">{label}</text>\n",
            x = legend_x + 16,
            y = legend_y + 11,
            label = category.label(),
        ));
        legend_x += 16 + 8 * category.label().len() + 18;
    }
    if let Some(rho) = src {
        out.push_str(&format!(
            "  <text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"12\" \
             fill=\"#111111\">SRC = {rho:.2}</text>\n",
            x = legend_x + 10,
            y = legend_y + 11,
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::OrderedEntry;

    fn sequence(categories: &[Category]) -> OrderedSequence {
        let entries: Vec<OrderedEntry> = categories
            .iter()
            .enumerate()
            .map(|(i, &category)| OrderedEntry {
                poem_id: format!("poem-{:02}", i + 1),
                mean_score: (categories.len() - i) as f64,
                category,
            })
            .collect();
        let category_ranks = entries.iter().map(|e| e.category.rank()).collect();
        OrderedSequence {
            entries,
            category_ranks,
        }
    }

    fn perfect_90() -> OrderedSequence {
        let mut categories = Vec::new();
        for c in Category::ALL {
            categories.extend(std::iter::repeat_n(c, 30));
        }
        sequence(&categories)
    }

    #[test]
    fn terminal_strip_has_one_block_per_poem_and_a_legend() {
        let s = emit_ordering_strip(&perfect_90(), Some(1.0), StripFormat::Terminal);
        assert_eq!(s.matches('█').count(), 90 + 3, "90 poems + 3 legend swatches");
        assert!(s.contains("Good") && s.contains("Medium") && s.contains("Bad"));
        assert!(s.contains("SRC = 1.00"));
    }

    #[test]
    fn perfect_svg_strip_is_three_contiguous_bands() {
        let s = emit_ordering_strip(&perfect_90(), Some(1.0), StripFormat::Svg);
        let fills: Vec<&str> = s
            .match_indices("<rect")
            .map(|(i, _)| {
                let tail = &s[i..];
                let start = tail.find("fill=\"").unwrap() + 6;
                &tail[start..start + 7]
            })
            .skip(1) // background rect
            .take(90)
            .collect();
        assert_eq!(fills.len(), 90);
        assert!(fills[..30].iter().all(|f| *f == "#4477aa"));
        assert!(fills[30..60].iter().all(|f| *f == "#44aa77"));
        assert!(fills[60..].iter().all(|f| *f == "#cc4444"));
        assert!(s.contains("SRC = 1.00"));
    }

    #[test]
    fn svg_is_well_formed_xml() {
        for seq in [perfect_90(), sequence(&[Category::Medium])] {
            let s = emit_ordering_strip(&seq, Some(0.87), StripFormat::Svg);
            let doc = roxmltree::Document::parse(&s).expect("well-formed XML");
            assert_eq!(doc.root_element().tag_name().name(), "svg");
        }
    }

    #[test]
    fn single_poem_sequence_renders_one_block() {
        let s = emit_ordering_strip(&sequence(&[Category::Bad]), None, StripFormat::Terminal);
        assert_eq!(s.matches('█').count(), 1 + 3);
        assert!(!s.contains("SRC ="));
    }

    #[test]
    fn poem_ids_are_escaped_in_titles() {
        let mut seq = sequence(&[Category::Good]);
        seq.entries[0].poem_id = "poem <&> one".into();
        let s = emit_ordering_strip(&seq, None, StripFormat::Svg);
        assert!(s.contains("poem &lt;&amp;&gt; one"));
        roxmltree::Document::parse(&s).expect("escaped XML stays well-formed");
    }
}
