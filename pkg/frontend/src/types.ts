export type Criterion = "relevance" | "aesthetics" | "complexity" | "fidelity";

export type Choice = "left" | "right" | "tie";

export const CRITERIA: readonly Criterion[] = [
  "relevance",
  "aesthetics",
  "complexity",
  "fidelity",
];

/** Task payload as served by the annotation service. */
export interface ServiceTask {
  task_id: string;
  experiment_id: string;
  prompt_index: number;
  prompt: string;
  criterion: Criterion;
  left_image_uri: string;
  right_image_uri: string;
}

/** ServiceTask plus the criterion instruction shown to the annotator. */
export interface TaskView {
  taskId: string;
  experimentId: string;
  promptIndex: number;
  prompt: string;
  criterion: Criterion;
  leftImageUri: string;
  rightImageUri: string;
  instruction: string;
}

export interface PendingVote {
  taskId: string;
  choice: Choice;
}
