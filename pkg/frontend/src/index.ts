export { figureKinds, figureSpecSchema, loadSpec } from "./figspec";
export type { FigureKind, FigureSpec } from "./figspec";
export { buildFigure, renderFigure, renderSpec } from "./figures";
export type { Figure, Series } from "./figures";
export { loadCsv, requireColumns } from "./csv";
