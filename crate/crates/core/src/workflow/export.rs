use std::io::Write;

use super::{Store, WorkflowError, WorkflowState};

pub const EXPORT_HEADER: [&str; 9] = [
    "mention_id",
    "doc_id",
    "subcategory",
    "surface",
    "ne_type",
    "correct_wiki",
    "suggestion_wiki",
    "language",
    "state",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportRow {
    pub mention_id: String,
    pub doc_id: String,
    pub subcategory: String,
    pub surface: String,
    pub ne_type: String,
    pub correct_wiki: String,
    pub suggestion_wiki: String,
    pub language: String,
    pub state: WorkflowState,
}

impl ExportRow {
    /// A row is unlabeled exactly when both wiki fields are empty.
    pub fn is_unlabeled(&self) -> bool {
        self.correct_wiki.is_empty() && self.suggestion_wiki.is_empty()
    }

    fn fields(&self) -> [&str; 9] {
        [
            &self.mention_id,
            &self.doc_id,
            &self.subcategory,
            &self.surface,
            &self.ne_type,
            &self.correct_wiki,
            &self.suggestion_wiki,
            &self.language,
            self.state.as_str(),
        ]
    }
}

fn clean(field: &str) -> String {
    field.replace(['\t', '\n', '\r'], " ")
}

impl Store {
    pub fn export_rows(&self) -> Result<Vec<ExportRow>, WorkflowError> {
        if !self.is_finalized() {
            return Err(WorkflowError::NotFinalized);
        }
        Ok(self
            .records()
            .iter()
            .map(|r| ExportRow {
                mention_id: r.mention_id.clone(),
                doc_id: r.mention.doc_id.clone(),
                subcategory: r.subcategory.clone(),
                surface: r.mention.surface.clone(),
                ne_type: r.mention.ne_type.to_string(),
                correct_wiki: r
                    .correct_wiki
                    .as_ref()
                    .map(|e| e.qid.clone())
                    .unwrap_or_default(),
                suggestion_wiki: r
                    .suggestion_wiki
                    .as_ref()
                    .map(|e| e.qid.clone())
                    .unwrap_or_default(),
                language: r.label().map(|e| e.language.clone()).unwrap_or_default(),
                state: r.state,
            })
            .collect())
    }
}

/// Writes the finalized corpus as TSV: header row, one row per linkable
/// mention, LF line ends, empty strings for absent values.
pub fn export_tsv<W: Write>(store: &Store, mut out: W) -> Result<usize, WorkflowError> {
    let rows = store.export_rows()?;
    writeln!(out, "{}", EXPORT_HEADER.join("\t"))?;
    for row in &rows {
        let fields: Vec<String> = row.fields().iter().map(|f| clean(f)).collect();
        writeln!(out, "{}", fields.join("\t"))?;
    }
    Ok(rows.len())
}
