use std::io::Cursor;

use logq_core::catalog::{
    builtin_schemas, load_table, parse_csv_range, split_csv, ByteRange, Catalog, ColumnDef,
    StorageMode, TableSchema,
};
use logq_core::engine::{
    execute_fragment, merge, plan, ColumnSource, FragmentPayload, FragmentResult, OutputSpec,
    PhysicalPlan, PlanOptions, ScanSpec,
};
use logq_core::sql::{
    parse, render, resolve, CmpOp, ColumnName, Comparison, JoinClause, Predicate, Projection, Query,
};
use logq_core::ErrorCode;
use proptest::prelude::*;

fn field() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 ._:/-]{0,12}"
}

fn rows(width: usize, max: usize) -> impl Strategy<Value = Vec<Vec<String>>> {
    prop::collection::vec(prop::collection::vec(field(), width), 0..max)
}

fn csv_text(header: &str, rows: &[Vec<String>]) -> String {
    let mut s = format!("{header}\n");
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn split_covers_data_region(rows in rows(3, 60), target in 1u64..400) {
        let text = csv_text("a,b,c", &rows);
        let bytes = text.as_bytes();
        let ranges = split_csv(bytes.len() as u64, Cursor::new(bytes), target).unwrap();
        let header = text.find('\n').unwrap() + 1;
        let mut joined = Vec::new();
        let mut expected_offset = header as u64;
        for r in &ranges {
            prop_assert_eq!(r.offset, expected_offset);
            prop_assert!(r.length > 0);
            prop_assert_eq!(bytes[r.offset as usize - 1], b'\n');
            joined.extend_from_slice(&bytes[r.offset as usize..r.end() as usize]);
            expected_offset = r.end();
        }
        prop_assert_eq!(&joined[..], &bytes[header..]);
    }

    #[test]
    fn load_counts_every_line(rows in rows(4, 80), target in 1u64..600) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, csv_text("Filepath,Phone,Carrier,Timestamp", &rows)).unwrap();
        let handle = load_table(&path, builtin_schemas().0, target).unwrap();
        prop_assert_eq!(handle.total_rows() as usize, rows.len());
        let sum: u64 = handle.partitions().iter().map(|p| p.row_count).sum();
        prop_assert_eq!(sum, handle.total_rows());
    }

    #[test]
    fn parse_then_serialize_reproduces_bytes(rows in rows(4, 40)) {
        let text = csv_text("h", &rows);
        let data = &text[2..];
        let range = ByteRange { offset: 2, length: data.len() as u64 };
        let part = parse_csv_range(data.as_bytes(), &builtin_schemas().0, 0, range).unwrap();
        let mut out = String::new();
        part.write_csv(&mut out);
        prop_assert_eq!(out, data);
    }

    #[test]
    fn merge_ignores_arrival_order(sizes in prop::collection::vec(0usize..6, 1..8), limit in prop::option::of(0u64..20), seed in any::<u64>()) {
        let plan = row_plan(limit);
        let fragments: Vec<FragmentResult> = sizes.iter().enumerate().map(|(p, n)| FragmentResult {
            query_id: 9,
            partition_id: p as u32,
            payload: FragmentPayload::Rows {
                columns: vec![(0..*n).map(|i| format!("{p}/{i}")).collect()],
                row_count: *n as u64,
            },
            rows_scanned: *n as u64,
        }).collect();
        let ids: Vec<u32> = (0..sizes.len() as u32).collect();
        let base = merge(9, fragments.clone(), &plan, &ids).unwrap();
        let mut shuffled = fragments;
        // deterministic Fisher-Yates driven by the seed
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let again = merge(9, shuffled, &plan, &ids).unwrap();
        prop_assert!(base.same_data(&again));
    }
}

fn row_plan(limit: Option<u64>) -> PhysicalPlan {
    PhysicalPlan {
        scan: ScanSpec {
            table: "t".into(),
            needed: vec![0],
            storage: StorageMode::Cached,
        },
        filter: vec![],
        join: None,
        output: OutputSpec::Project(vec![ColumnSource::Probe(0)]),
        limit,
        row_cap: None,
        columns: vec!["a".into()],
    }
}

fn ident() -> impl Strategy<Value = String> {
    prop_oneof![
        "[A-Za-z_][A-Za-z0-9_]{0,8}",
        // names that need backquotes
        "[a-z]{1,4} [a-z]{1,4}",
        Just("select".to_string()),
        Just("Count".to_string()),
    ]
}

fn column_name() -> impl Strategy<Value = ColumnName> {
    (prop::option::of(ident()), ident()).prop_map(|(table, name)| ColumnName { table, name })
}

fn qualified() -> impl Strategy<Value = ColumnName> {
    (ident(), ident()).prop_map(|(t, n)| ColumnName::qualified(t, n))
}

fn query() -> impl Strategy<Value = Query> {
    let projection = prop_oneof![
        Just(Projection::Star),
        Just(Projection::CountStar),
        prop::collection::vec(column_name(), 1..5).prop_map(Projection::Columns),
    ];
    let join = prop::option::of(
        (ident(), qualified(), qualified()).prop_map(|(table, left, right)| JoinClause {
            table,
            left,
            right,
        }),
    );
    let op = prop::sample::select(CmpOp::ALL.to_vec());
    let comparison =
        (column_name(), op, "[ -~]{0,10}").prop_map(|(column, op, literal)| Comparison {
            column,
            op,
            literal,
        });
    let filter = prop::option::of(
        prop::collection::vec(comparison, 1..4).prop_map(|comparisons| Predicate { comparisons }),
    );
    (
        projection,
        ident(),
        join,
        filter,
        prop::option::of(any::<u64>()),
    )
        .prop_map(|(projection, from, join, filter, limit)| Query {
            projection,
            from,
            join,
            filter,
            limit,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn render_round_trips(q in query()) {
        let text = render(&q);
        prop_assert_eq!(parse(&text).unwrap(), q);
    }

    #[test]
    fn non_select_first_word_rejected(word in "[A-Za-z]{1,10}", rest in "[ -~]{0,30}") {
        prop_assume!(!word.eq_ignore_ascii_case("select"));
        let text = format!("{word} {rest}");
        prop_assert!(parse(&text).is_err());
        if let Ok(tokens) = logq_core::sql::tokenize(&text) {
            if !tokens.is_empty() {
                prop_assert_eq!(parse(&text).unwrap_err().code, ErrorCode::NonQuery);
            }
        }
    }

    #[test]
    fn second_statement_rejected(q in query(), rest in "[ -~]{1,30}") {
        prop_assume!(!rest.trim().is_empty());
        let text = format!("{}; {rest}", render(&q));
        prop_assert!(parse(&text).is_err());
    }
}

#[test]
fn thousand_lines_split_into_about_ten_ranges() {
    let mut text = String::from("Filepath,Phone,Carrier,Timestamp\n");
    for i in 0..1000 {
        text.push_str(&format!("/p/{i:05}.mi2log,LG,Verizon,2015-12-19\n"));
    }
    let line_len = "/p/00000.mi2log,LG,Verizon,2015-12-19\n".len() as u64;
    let bytes = text.as_bytes();
    let ranges = split_csv(bytes.len() as u64, Cursor::new(bytes), 100 * line_len).unwrap();
    assert!((9..=11).contains(&ranges.len()), "{}", ranges.len());
    let header = text.find('\n').unwrap() + 1;
    let rebuilt: Vec<u8> = ranges
        .iter()
        .flat_map(|r| bytes[r.offset as usize..r.end() as usize].iter().copied())
        .collect();
    assert_eq!(&rebuilt[..], &bytes[header..]);
}

fn tmsg_catalog(rows: usize, target: u64) -> (tempfile::TempDir, Catalog) {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("Filepath,Timestamp,MsgType,MsgHash,MsgPath,LineNo\n");
    for i in 0..rows {
        text.push_str(&format!(
            "/f/{},2015-12-19 16:42:{:02},LTE,{i:08x},/m,{i}\n",
            i % 13,
            i % 60
        ));
    }
    let path = dir.path().join("tMsg.csv");
    std::fs::write(&path, text).unwrap();
    let mut catalog = Catalog::new();
    catalog
        .register(load_table(&path, builtin_schemas().1, target).unwrap())
        .unwrap();
    (dir, catalog)
}

#[test]
fn limit_scan_bounded_per_partition() {
    let (_dir, mut catalog) = tmsg_catalog(5_000, 4_000);
    let partitions = catalog.get("tMsg").unwrap().partitions().len();
    assert!(partitions >= 20);
    for storage in [StorageMode::DiskStream, StorageMode::Cached] {
        if storage == StorageMode::Cached {
            catalog.cache_table("tMsg").unwrap();
        }
        let q = resolve(&parse("SELECT * FROM tMsg LIMIT 10").unwrap(), &catalog).unwrap();
        let plan = plan(&q, storage, &PlanOptions::default()).unwrap();
        let mut scanned = 0;
        for p in 0..partitions as u32 {
            let part = catalog
                .partition("tMsg", p, storage, plan.scan_row_budget())
                .unwrap();
            scanned += execute_fragment(1, &plan, &part, None)
                .unwrap()
                .rows_scanned;
        }
        assert!(scanned <= 10 * partitions as u64, "{scanned}");
    }
}

#[test]
fn metadata_count_equals_scan_count() {
    for (rows, target) in [(0, 100), (1, 100), (777, 512), (3000, 1 << 20)] {
        let (_dir, mut catalog) = tmsg_catalog(rows, target);
        catalog.cache_table("tMsg").unwrap();
        let q = resolve(&parse("SELECT COUNT(*) FROM tMsg").unwrap(), &catalog).unwrap();
        let engine = logq_core::engine::LocalEngine::default();
        let meta = engine.execute(&q, &catalog, StorageMode::Cached).unwrap();
        let scan_engine = logq_core::engine::LocalEngine::new(logq_core::engine::EngineOptions {
            plan: PlanOptions {
                metadata_count: false,
                ..PlanOptions::default()
            },
            threads: 1,
        });
        let scan = scan_engine
            .execute(&q, &catalog, StorageMode::Cached)
            .unwrap();
        assert_eq!(meta.count(), Some(rows as u64));
        assert_eq!(meta.count(), scan.count());
    }
}

#[test]
fn custom_schema_table_is_queryable() {
    let dir = tempfile::tempdir().unwrap();
    let schema = TableSchema::new(
        "tDevice",
        vec![ColumnDef::text("Serial"), ColumnDef::text("Model")],
        vec!["Serial".into()],
    )
    .unwrap();
    let path = dir.path().join("tDevice.csv");
    std::fs::write(&path, "Serial,Model\n1,LG\n2,SM\n3,LG\n").unwrap();
    let mut catalog = Catalog::new();
    catalog
        .register(load_table(&path, schema, 1024).unwrap())
        .unwrap();
    let q = resolve(
        &parse("SELECT Serial FROM tDevice WHERE Model = 'LG'").unwrap(),
        &catalog,
    )
    .unwrap();
    let r = logq_core::engine::execute_local(&q, &catalog, StorageMode::DiskStream).unwrap();
    assert_eq!(r.rows, [["1"], ["3"]]);
    assert_eq!(r.mode, "disk-single");
}
