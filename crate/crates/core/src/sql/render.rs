use super::ast::{ColumnName, Projection, Query};
use super::token::Keyword;

/// Writes an identifier, backquoting it when it would not lex back as the
/// same identifier.
pub fn quote_identifier(name: &str) -> String {
    let plain = name
        .bytes()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == b'_')
        && name.bytes().all(|c| c.is_ascii_alphanumeric() || c == b'_')
        && Keyword::lookup(name).is_none();
    if plain {
        name.to_string()
    } else {
        format!("`{name}`")
    }
}

fn column(col: &ColumnName) -> String {
    match &col.table {
        Some(t) => format!("{}.{}", quote_identifier(t), quote_identifier(&col.name)),
        None => quote_identifier(&col.name),
    }
}

fn literal(value: &str) -> String {
    format!("'{}'", value.replace('\'', "''"))
}

/// Canonical text for a query: upper-case keywords, single spaces, no
/// trailing semicolon.
pub fn render(query: &Query) -> String {
    let mut out = String::from("SELECT ");
    match &query.projection {
        Projection::Star => out.push('*'),
        Projection::CountStar => out.push_str("COUNT(*)"),
        Projection::Columns(cols) => {
            let list: Vec<String> = cols.iter().map(column).collect();
            out.push_str(&list.join(", "));
        }
    }
    out.push_str(" FROM ");
    out.push_str(&quote_identifier(&query.from));
    if let Some(join) = &query.join {
        out.push_str(&format!(
            " JOIN {} ON {} = {}",
            quote_identifier(&join.table),
            column(&join.left),
            column(&join.right)
        ));
    }
    if let Some(pred) = &query.filter {
        let parts: Vec<String> = pred
            .comparisons
            .iter()
            .map(|c| {
                format!(
                    "{} {} {}",
                    column(&c.column),
                    c.op.symbol(),
                    literal(&c.literal)
                )
            })
            .collect();
        out.push_str(" WHERE ");
        out.push_str(&parts.join(" AND "));
    }
    if let Some(n) = query.limit {
        out.push_str(&format!(" LIMIT {n}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::parse;

    #[test]
    fn count_star_canonical_form() {
        let q = parse("select count(*) from tMsg").unwrap();
        assert_eq!(render(&q), "SELECT COUNT(*) FROM tMsg");
    }

    #[test]
    fn keywords_and_odd_names_are_quoted() {
        assert_eq!(quote_identifier("Timestamp"), "Timestamp");
        assert_eq!(quote_identifier("count"), "`count`");
        assert_eq!(quote_identifier("Query 1"), "`Query 1`");
        assert_eq!(quote_identifier("1st"), "`1st`");
    }

    #[test]
    fn literal_quotes_are_doubled() {
        let q = parse("SELECT * FROM t WHERE a = 'it''s'").unwrap();
        assert_eq!(render(&q), "SELECT * FROM t WHERE a = 'it''s'");
        assert_eq!(parse(&render(&q)).unwrap(), q);
    }
}
