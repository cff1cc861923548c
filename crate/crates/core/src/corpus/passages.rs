use super::{Passage, Span};

/// Fewest comments a passage may keep.
pub const MIN_COMMENTS: usize = 3;

/// `|A ∩ B| / min(|A|, |B|)`; 0 for degenerate spans.
pub fn overlap_rate(a: &Span, b: &Span) -> f64 {
    let shorter = a.len().min(b.len());
    if shorter == 0 {
        return 0.0;
    }
    a.intersection(b) as f64 / shorter as f64
}

fn absorb(into: &mut Passage, other: Passage) {
    let (lead, lead_span, tail, tail_span) = if into.span.start <= other.span.start {
        (&into.text, into.span, &other.text, other.span)
    } else {
        (&other.text, other.span, &into.text, into.span)
    };
    // The spans overlap, so the tail continues where the lead stops.
    let covered = lead_span.end.saturating_sub(tail_span.start);
    let mut text = lead.clone();
    if covered < tail.len() {
        text.extend_from_slice(&tail[covered..]);
    }
    into.text = text;
    into.span = into.span.union(&other.span);
    into.entity_ids.extend(other.entity_ids);
    into.comments.extend(other.comments);
}

/// Repeatedly merges any same-chapter pair whose overlap rate exceeds
/// `threshold` until no such pair remains. Output is sorted by
/// `(chapter, start, end)`.
pub fn merge_passages(mut passages: Vec<Passage>, threshold: f64) -> Vec<Passage> {
    passages.sort_by_key(|p| (p.chapter_index, p.span.start, p.span.end));
    loop {
        let mut pair = None;
        'search: for i in 0..passages.len() {
            for j in i + 1..passages.len() {
                if passages[j].chapter_index != passages[i].chapter_index {
                    break;
                }
                if overlap_rate(&passages[i].span, &passages[j].span) > threshold {
                    pair = Some((i, j));
                    break 'search;
                }
            }
        }
        let Some((i, j)) = pair else { break };
        let other = passages.remove(j);
        absorb(&mut passages[i], other);
        passages.sort_by_key(|p| (p.chapter_index, p.span.start, p.span.end));
    }
    passages
}

/// Keeps passages with at least one entity and at least [`MIN_COMMENTS`]
/// comments, then drops the `floor(0.2 n)` lowest-voted comments of each.
pub fn filter_passages(passages: Vec<Passage>) -> Vec<Passage> {
    passages
        .into_iter()
        .filter(|p| !p.entity_ids.is_empty() && p.comments.len() >= MIN_COMMENTS)
        .map(|mut p| {
            p.comments.sort_by_key(|c| std::cmp::Reverse(c.upvotes));
            let drop = p.comments.len() / 5;
            p.comments.truncate(p.comments.len() - drop);
            p
        })
        .collect()
}
