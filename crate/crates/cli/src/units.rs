//! Byte sizes on the command line: `512`, `64KB`, `6MB`, `1GB` (binary
//! multiples), plus the sweep presets.

const KB: usize = 1024;
const MB: usize = 1024 * KB;

/// Named list-limit sweeps.
pub const PRESETS: [(&str, [usize; 4]); 2] = [
    ("sweep9", [MB, 3 * MB, 6 * MB, 9 * MB]),
    ("sweep8", [MB, 3 * MB, 6 * MB, 8 * MB]),
];

pub fn parse_size(text: &str) -> Result<usize, String> {
    let t = text.trim();
    let split = t.find(|c: char| !c.is_ascii_digit()).unwrap_or(t.len());
    let (digits, unit) = t.split_at(split);
    let n: usize = digits
        .parse()
        .map_err(|_| format!("`{text}` is not a size such as 64KB or 6MB"))?;
    let scale = match unit.trim().to_ascii_uppercase().as_str() {
        "" | "B" => 1,
        "K" | "KB" | "KIB" => KB,
        "M" | "MB" | "MIB" => MB,
        "G" | "GB" | "GIB" => 1024 * MB,
        other => return Err(format!("unknown size unit `{other}` in `{text}`")),
    };
    let bytes = n.checked_mul(scale).ok_or_else(|| format!("`{text}` is too large"))?;
    if bytes == 0 {
        return Err("a list limit must be positive".into());
    }
    Ok(bytes)
}

/// Expands a comma-separated mix of sizes and preset names.
pub fn parse_sweep(items: &[String]) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for item in items {
        match PRESETS.iter().find(|(name, _)| *name == item.as_str()) {
            Some((_, sizes)) => out.extend(sizes),
            None => out.push(parse_size(item)?),
        }
    }
    Ok(out)
}

pub fn format_size(bytes: usize) -> String {
    if bytes.is_multiple_of(MB) {
        format!("{}MB", bytes / MB)
    } else if bytes.is_multiple_of(KB) {
        format!("{}KB", bytes / KB)
    } else {
        format!("{bytes}B")
    }
}
