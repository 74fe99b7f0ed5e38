import { existsSync, mkdirSync, readFileSync, writeFileSync } from 'fs';
import { join } from 'path';
import * as echarts from 'echarts';
import { readCsv, CsvFile } from './csv';
import { BuiltFigure, DEFAULT_SPECS, FigureSpec, INPUT_SCHEMAS, buildFigure } from './figures';

export interface RenderResult {
  svgPath: string;
  dataPath: string;
  figure: BuiltFigure;
}

function renderSvg(figure: BuiltFigure): string {
  const chart = echarts.init(null, null, {
    renderer: 'svg',
    ssr: true,
    width: 900,
    height: 520,
  });
  chart.setOption(figure.option);
  const svg = chart.renderToSVGString();
  chart.dispose();
  return svg;
}

/**
 * Render every figure spec from the CSV directory into the output directory.
 *
 * Each figure is written twice: the SVG image and a `.data.json` sidecar
 * holding the exact statistics that were drawn, so they can be checked
 * against the CSV independently.
 */
export function render(specs: FigureSpec[], csvDir: string, outDir: string): RenderResult[] {
  mkdirSync(outDir, { recursive: true });
  const cache = new Map<string, CsvFile>();
  const results: RenderResult[] = [];
  for (const spec of specs) {
    const file = join(csvDir, `${spec.input}.csv`);
    let csv = cache.get(file);
    if (!csv) {
      csv = readCsv(file, INPUT_SCHEMAS[spec.input]);
      cache.set(file, csv);
    }
    const figure = buildFigure(spec, csv);
    const svgPath = join(outDir, `${spec.name}.svg`);
    const dataPath = join(outDir, `${spec.name}.data.json`);
    writeFileSync(svgPath, renderSvg(figure));
    writeFileSync(dataPath, JSON.stringify({ seed: csv.seed, ...figure.data }, null, 2) + '\n');
    results.push({ svgPath, dataPath, figure });
  }
  return results;
}

function parseArgs(argv: string[]): { csvDir: string; outDir: string; specPath?: string } {
  const args: Record<string, string> = {};
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (!key?.startsWith('--') || value === undefined) {
      throw new Error(`bad argument pair: ${key} ${value}`);
    }
    args[key.slice(2)] = value;
  }
  if (!args['csv-dir'] || !args['out-dir']) {
    throw new Error('usage: render --csv-dir DIR --out-dir DIR [--spec FILE]');
  }
  return { csvDir: args['csv-dir'], outDir: args['out-dir'], specPath: args['spec'] };
}

export function main(argv: string[]): number {
  let parsed;
  try {
    parsed = parseArgs(argv);
  } catch (err) {
    console.error(String(err));
    return 2;
  }
  const specs: FigureSpec[] = parsed.specPath
    ? JSON.parse(readFileSync(parsed.specPath, 'utf-8'))
    : DEFAULT_SPECS;
  try {
    const results = render(specs, parsed.csvDir, parsed.outDir);
    for (const r of results) {
      console.log(`wrote ${r.svgPath}`);
    }
    return 0;
  } catch (err) {
    console.error(String(err));
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
