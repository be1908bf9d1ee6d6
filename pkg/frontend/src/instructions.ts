import type { Criterion } from "./types.js";

/** Criterion headline shown next to the prompt. */
export const CRITERION_TITLES: Record<Criterion, string> = {
  relevance: "Image-Text Relevance",
  aesthetics: "Aesthetic Quality",
  complexity: "Image Complexity",
  fidelity: "Fidelity",
};

/** What the annotator is asked to judge for each criterion. */
export const CRITERION_INSTRUCTIONS: Record<Criterion, string> = {
  relevance: "Accuracy of the image content relative to the text prompt.",
  aesthetics: "Overall visual appeal, including composition and style.",
  complexity: "Richness of detail and content within the scene.",
  fidelity:
    "Presence and severity of defects, artifacts, distortions, or undesirable elements.",
};

export function instructionFor(criterion: Criterion): string {
  const instruction = CRITERION_INSTRUCTIONS[criterion];
  if (!instruction) {
    throw new Error(`unknown criterion: ${criterion}`);
  }
  return instruction;
}

export function titleFor(criterion: Criterion): string {
  const title = CRITERION_TITLES[criterion];
  if (!title) {
    throw new Error(`unknown criterion: ${criterion}`);
  }
  return title;
}
