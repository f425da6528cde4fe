use super::Token;

/// Splits on whitespace, then detaches leading and trailing punctuation
/// characters as single-character tokens. Internal punctuation stays, so
/// `Epstein-Barr` and `e.g` remain whole.
pub fn tokenize(text: &str) -> Vec<Token> {
    tokenize_at(text, 0)
}

/// Like [`tokenize`], with offsets shifted by `base`.
pub fn tokenize_at(text: &str, base: usize) -> Vec<Token> {
    let mut out = Vec::new();
    let mut chunk_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = chunk_start.take() {
                split_chunk(&text[s..i], base + s, &mut out);
            }
        } else if chunk_start.is_none() {
            chunk_start = Some(i);
        }
    }
    if let Some(s) = chunk_start {
        split_chunk(&text[s..], base + s, &mut out);
    }
    out
}

fn split_chunk(chunk: &str, offset: usize, out: &mut Vec<Token>) {
    let first_alnum = chunk.char_indices().find(|(_, c)| c.is_alphanumeric());
    let Some((core_start, _)) = first_alnum else {
        for (i, c) in chunk.char_indices() {
            out.push(Token::new(&chunk[i..i + c.len_utf8()], offset + i));
        }
        return;
    };
    let (last_idx, last_char) = chunk
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_alphanumeric())
        .unwrap();
    let core_end = last_idx + last_char.len_utf8();
    for (i, c) in chunk[..core_start].char_indices() {
        out.push(Token::new(&chunk[i..i + c.len_utf8()], offset + i));
    }
    out.push(Token::new(&chunk[core_start..core_end], offset + core_start));
    for (i, c) in chunk[core_end..].char_indices() {
        let at = core_end + i;
        out.push(Token::new(&chunk[at..at + c.len_utf8()], offset + at));
    }
}

/// True for tokens made only of non-alphanumeric characters.
pub fn is_punctuation_token(text: &str) -> bool {
    !text.is_empty() && !text.chars().any(char::is_alphanumeric)
}
