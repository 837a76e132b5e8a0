#!/usr/bin/env node
/** CLI over the three plot products. */

import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { plotEnergy, plotVolume, plotInterface } from "./plots.js";

class UsageError extends Error {}

export async function main(argv: string[]): Promise<number> {
  let code = 0;
  const fail = (e: unknown) => {
    console.error(`error: ${e instanceof Error ? e.message : e}`);
    code = 1;
  };
  const parser = yargs(argv)
    .scriptName("nsch2d-plot")
    .command(
      "energy <csv..>",
      "total-energy traces from one or more runs",
      (y) =>
        y
          .positional("csv", { array: true, type: "string", demandOption: true })
          .option("out", { type: "string", default: "energy.svg" })
          .option("components", { type: "boolean", default: false }),
      (args) => {
        try {
          const r = plotEnergy(args.csv as string[], args.out, { components: args.components });
          console.log(`wrote ${args.out} (${r.labels.join(", ")})`);
        } catch (e) {
          fail(e);
        }
      },
    )
    .command(
      "volume <csv..>",
      "phase-volume traces",
      (y) =>
        y
          .positional("csv", { array: true, type: "string", demandOption: true })
          .option("out", { type: "string", default: "volume.svg" }),
      (args) => {
        try {
          const r = plotVolume(args.csv as string[], args.out);
          console.log(`wrote ${args.out} (${r.labels.join(", ")})`);
        } catch (e) {
          fail(e);
        }
      },
    )
    .command(
      "interface <vtk>",
      "c=0.5 interface over a field color map with velocity glyphs",
      (y) =>
        y
          .positional("vtk", { type: "string", demandOption: true })
          .option("out", { type: "string", default: "interface.svg" })
          .option("background", { choices: ["div_u", "speed"] as const, default: "div_u" as const }),
      (args) => {
        try {
          const r = plotInterface(args.vtk as string, args.out, { background: args.background });
          console.log(
            `wrote ${args.out}: ${r.loops.length} contour(s), ${r.closedLoops} closed`,
          );
        } catch (e) {
          fail(e);
        }
      },
    )
    .demandCommand(1)
    .strict()
    .exitProcess(false)
    .fail((msg, err) => {
      if (err) throw err;
      console.error(msg);
      code = 2;
      // stop yargs here, otherwise it would still run the command handler
      throw new UsageError(msg ?? "usage error");
    });
  try {
    await parser.parseAsync();
  } catch (e) {
    if (!(e instanceof UsageError)) throw e;
  }
  return code;
}

const invokedDirectly =
  process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");
if (invokedDirectly) {
  main(hideBin(process.argv)).then((code) => {
    process.exitCode = code;
  });
}
