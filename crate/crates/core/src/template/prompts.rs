//! Prompt texts. Angle-bracket placeholders are substituted verbatim; the
//! wording (including its typos) is kept as is so fixtures keyed by prompt
//! text stay stable.

use alloc::string::String;

pub const SUGGEST_FEATURES: &str = "\
-You are an expert in machine learning feature selection, specifically for the GNN graph machine tasks.
-Think about information required to accurately <task>.
- Return a numbered list of items without explanation.
- Sort the list according to item importance.";

pub const FEATURES_TO_BGPS: &str = "\
-You are an expert in machine learning feature selection for graph machine learning tasks.
- The following describes the <KG> knowledge graph schema, detailing the relationships between graph entities in a series of triples, one triple per line:
<KG-schema>
-Given the following list of key features, select the matching relations from the previous schema.
<suggested-features>
-Think carefully and refine your selected/matching items
  Return the top <K> matched schema triples sorted by importance.
-Output only one selected triple per line without any explanation.";

pub const BGPS_TO_SPARQL: &str = "\
-You are an expert SPARQL query writer.
- Given the following triples list from the <KG> knowledge graph schema, write a SPARQL query to select the <VT> and its associated information given in the following triples list.
- The triples are directed; make sure to fulfill the direction and relation type.
- The query must return the union of sub-select statements in the form ?s ?p ?o.
- Each triple is Subject Entity - relation - Object Entity.
- Start with the <VT> node.
<BGP-List>
<SPARQL-Example>
-----------------Rules---------------------
1- Write nested select sub-queries and Union them.
2- In single-hop nested select, make sure to start the first BGP with the variable ?s.
3- In tow-hop or more nested select:
      3.1 Start the first BGP with the variable ?s, then use other variable names for next BGPs.
      3.2 Use the last connected entity as the subject, as shown in the previous example.
4- Generate only the SPARQL query without any explanation.
5- Make sure to use each given BGP triple.
6- add the BGP:  'Values ?s <VT-List>.' to the end of each sub query.
7- Refine all rules and the query syntax.
8- Do invent new relations i.e, dblp:authoredBy can not be dblp:Authored, But you can start with ?o instead of ?s.
Example:
      ?s a dblp:Publication.
      ?s dblp:authoredBy ?o.
      --------- Should Be ---------
      ?o a dblp:author.
      ?s dblp:authoredBy ?o.";

pub const REFINE_SPARQL: &str = "\
-You are an expert SPARQL query writer.
Given the following SPARQL query, re-write it to follow the following rules.
- Rule1: Keep the nested selects and their Union statements.
- Rule2: restructure the n-hop sub-select to choose the latest BGP subject and object and as the select items.
- Example: {?s a prefix:x.
?s prefix:y ?y.
?y prefix:z ?z.}
the latest BGP is ?y prefix:z ?z, then the select items must be: 1- ?y as ?s.  2- ?p.  3- ?z as ?o
-------- SPARQL Query ----------------
<sparql-query>
-Refine The Rules and Examples Carefully.
-Return only the Query; do not return any explanation.
<Answer>";

/// Example query passed as `<SPARQL-Example>` when the task supplies none.
pub const DEFAULT_SPARQL_EXAMPLE: &str = "\
SELECT ?s ?p ?o
WHERE {
{ SELECT ?s ?p ?o WHERE { ?s a ex:Paper. ?s ex:title ?o. BIND(\"ex:title\" AS ?p). VALUES ?s {<VT-List>}. }}
UNION
{ SELECT ?author ?p ?o WHERE { ?s a ex:Paper. ?s ex:author ?author. ?author ex:name ?o. BIND(\"ex:name\" AS ?p). VALUES ?s {<VT-List>}. }}
}";

/// Substitutes placeholders in a single left-to-right pass, so substituted
/// text is never rescanned.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'scan: while !rest.is_empty() {
        for (k, v) in values {
            if let Some(tail) = rest.strip_prefix(k) {
                out.push_str(v);
                rest = tail;
                continue 'scan;
            }
        }
        let ch = rest.chars().next().expect("non-empty");
        out.push(ch);
        rest = &rest[ch.len_utf8()..];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pass() {
        assert_eq!(render("a <K> <KG> b", &[("<K>", "<KG>"), ("<KG>", "dblp")]), "a <KG> dblp b");
        assert!(render(BGPS_TO_SPARQL, &[("<VT>", "x")]).contains("'Values ?s <VT-List>.'"));
    }
}
