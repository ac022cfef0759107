/** Wire types for the discovery service (see ../docs/api.md). */

export interface DrsItem {
  id: string;
  score: number;
  kind: string;
  name: string;
  parent_table?: string;
  parent_table_name?: string;
  snippet?: string;
  breakdown?: Record<string, number>;
}

export interface ProvenanceRecord {
  id: string;
  op: string;
  params: Record<string, unknown>;
  parents: string[];
}

export interface DrsResponse {
  drs_id: string;
  items: DrsItem[];
  provenance: ProvenanceRecord[];
}

export interface SchemaColumn {
  id: string;
  name: string;
  inferred_type: string;
}

export interface DeDetail {
  id: string;
  kind: string;
  name: string;
  row_count?: number;
  schema?: SchemaColumn[];
  parent_table?: string;
  parent_table_name?: string;
  inferred_type?: string;
  tags?: string[];
  sample_values?: string[];
  distinct_count?: number;
  title?: string;
  source?: string;
  snippet?: string;
  word_count?: number;
  parent_doc?: string | null;
}

export interface GraphEdge {
  src: string;
  dst: string;
  relation: string;
  weight: number;
  breakdown: Record<string, number>;
}

export interface Neighborhood {
  center: string;
  depth: number;
  nodes: DeDetail[];
  edges: GraphEdge[];
}

export interface LakeSummary {
  tables: number;
  columns: number;
  documents: number;
  edges_by_relation: Record<string, number>;
  joint_model: boolean;
}
