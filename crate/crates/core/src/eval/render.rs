use std::fmt::Write as _;
use std::path::Path;

use super::{token_prf, MetricError};

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

/// Standalone HTML page. Model selections are highlighted, gold tokens are
/// underlined; each example carries its own P/R/F1 when gold is present.
pub fn render_html(
    tokens: &[Vec<String>],
    masks: &[Vec<u8>],
    gold: Option<&[Vec<u8>]>,
) -> Result<String, MetricError> {
    if tokens.len() != masks.len() {
        return Err(MetricError::CountMismatch {
            predictions: masks.len(),
            labels: tokens.len(),
        });
    }
    let mut s = String::from(
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>Rationales</title>\n<style>\n\
         body { font-family: sans-serif; max-width: 60em; margin: 2em auto; }\n\
         .sel { background: #ffe08a; }\n.gold { text-decoration: underline; text-decoration-thickness: 2px; }\n\
         .ex { margin: 1em 0; line-height: 1.8; }\n.score { color: #555; font-size: 0.85em; }\n\
         </style>\n</head>\n<body>\n<p><span class=\"sel\">highlight</span> = selected, \
         <span class=\"gold\">underline</span> = annotated</p>\n",
    );
    for (i, (toks, m)) in tokens.iter().zip(masks).enumerate() {
        if toks.len() != m.len() {
            return Err(MetricError::LengthMismatch {
                index: i,
                predicted: m.len(),
                gold: toks.len(),
            });
        }
        let g = gold.map(|g| &g[i]);
        let _ = write!(s, "<div class=\"ex\" id=\"ex{i}\">");
        if let Some(g) = g {
            match token_prf(std::slice::from_ref(m), std::slice::from_ref(g)) {
                Ok(p) => {
                    let _ = write!(
                        s,
                        "<span class=\"score\">P={:.3} R={:.3} F1={:.3}</span> ",
                        p.precision, p.recall, p.f1
                    );
                }
                Err(MetricError::NoGoldTokens) => {
                    s.push_str("<span class=\"score\">no gold tokens</span> ")
                }
                Err(e) => return Err(e),
            }
        }
        for (t, tok) in toks.iter().enumerate() {
            let mut classes = Vec::new();
            if m[t] != 0 {
                classes.push("sel");
            }
            if g.is_some_and(|g| g.get(t).copied().unwrap_or(0) != 0) {
                classes.push("gold");
            }
            if classes.is_empty() {
                let _ = write!(s, "{} ", escape(tok));
            } else {
                let _ = write!(
                    s,
                    "<span class=\"{}\">{}</span> ",
                    classes.join(" "),
                    escape(tok)
                );
            }
        }
        s.push_str("</div>\n");
    }
    s.push_str("</body>\n</html>\n");
    Ok(s)
}

pub fn render_rationales(
    path: &Path,
    tokens: &[Vec<String>],
    masks: &[Vec<u8>],
    gold: Option<&[Vec<u8>]>,
) -> Result<(), MetricError> {
    std::fs::write(path, render_html(tokens, masks, gold)?)?;
    Ok(())
}
