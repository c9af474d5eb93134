# demo_running_example.py
"""
Recorrido por el sistema con el ejemplo de referencia
(Ciudad de México, Washington, Obama)

Uso: python demo_running_example.py [--interactive]
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import numpy as np

from core.alignment import align_graphs
from core.embedding_models import ModelKind
from core.evaluation import EvaluationSet, evaluate
from core.negative_sampling import (TripletFilter, build_negative_relation_index,
                                    overlapping_pairs, replace_entities, replace_relation)
from core.synthetic import running_example, running_example_graphs
from core.trainer import TrainerConfig, train


class DemoEjemplo:
    """Demo paso a paso sobre los dos grafos del ejemplo"""

    def __init__(self, interactive: bool = False):
        self.interactive = interactive
        self.g1 = None
        self.g2 = None
        self.index = None
        self.model = None

    def print_header(self, texto):
        print("\n" + "=" * 70)
        print(f"  {texto}")
        print("=" * 70 + "\n")

    def print_step(self, numero, texto):
        print(f"\n{'─' * 70}")
        print(f"📍 PASO {numero}: {texto}")
        print(f"{'─' * 70}\n")

    def wait_for_user(self, mensaje="Presiona ENTER para continuar..."):
        if self.interactive:
            input(f"\n{mensaje}")

    def rel(self, name: str) -> int:
        return self.g1.relations.id_of(name)

    def paso_1_grafos(self):
        self.print_step(1, "GRAFOS DE ENTRADA")
        target, external = running_example()
        print("Grafo objetivo (G1, ruidoso):")
        for row in target:
            print(f"  {row}")
        print("\nGrafo externo (G2, curado):")
        for row in external:
            print(f"  {row}")
        return True

    def paso_2_alineamiento(self):
        self.print_step(2, "ALINEAMIENTO DE ENTIDADES")
        raw1, raw2 = running_example_graphs()
        self.g1, self.g2, alignment = align_graphs(raw1, raw2)

        print(f"✓ {alignment.overlap_count} entidades solapadas:")
        for ext, tgt in alignment.matches.items():
            print(f"  {raw2.entities.name_of(ext):12} -> ID compartido {tgt}")
        print(f"\nEspacio común: {self.g1.num_entities} entidades, {self.g1.num_relations} relaciones")
        return True

    def paso_3_relaciones_negativas(self):
        self.print_step(3, "RELACIONES NEGATIVAS CROSS-KG")
        self.index = build_negative_relation_index(self.g1, self.g2)

        for r in self.index.target_relations + self.index.external_relations:
            names = sorted(self.g1.relations.name_of(x) for x in self.index.negatives(r))
            print(f"  N({self.g1.relations.name_of(r)}) = {{{', '.join(names)}}}")

        pairs = overlapping_pairs(self.rel('locatedat'), self.rel('locatedin'), self.g1, self.g2)
        shown = sorted((self.g1.entities.name_of(s), self.g1.entities.name_of(o)) for s, o in pairs)
        print(f"\n  O(locatedat, locatedin) = {shown}")
        return True

    def paso_4_negativos(self):
        self.print_step(4, "NEGATIVOS CROSS-KG")
        rng = np.random.default_rng(0)
        triplet_filter = TripletFilter([self.g1, self.g2], self.g1.num_entities, self.g1.num_relations)
        t2 = self.g2.lookup('Mexico', 'hasneighbor', 'USA')

        relation_replaced, entity_replaced = set(), set()
        for _ in range(50):
            neg = replace_relation(t2, self.index, rng, triplet_filter, self.g2)
            if neg is not None:
                relation_replaced.add(self.g1.names(neg))
            neg = replace_entities(t2, self.index, self.g1, rng, triplet_filter, self.g2)
            if neg is not None:
                entity_replaced.add(self.g1.names(neg))

        print(f"Desde {self.g2.names(t2)}:")
        print(f"  Reemplazo de relación:  {sorted(relation_replaced)}")
        print(f"  Reemplazo de entidades: {sorted(entity_replaced)}")
        return bool(relation_replaced and entity_replaced)

    def paso_5_entrenar_y_validar(self):
        self.print_step(5, "ENTRENAMIENTO Y VALIDACIÓN")
        config = TrainerConfig(learning_rate=0.01, batch_size=4, epochs=100, neg_conventional=2, seed=0)
        result = train(self.g1, self.g2, config, ModelKind.DISTMULT, 32, self.index)
        self.model = result.model

        last = result.log[-1]
        print(f"✓ {config.epochs} épocas | L_G1 {last['mean_loss_g1']:.4f} | L_G2 {last['mean_loss_g2']:.4f}")

        suspicious = self.g1.lookup('Mexico City', 'locatedat', 'USA')
        d = EvaluationSet.from_parts(
            [t for t in self.g1 if t != suspicious],
            [suspicious],
        )
        report = evaluate(self.model, d, ks=[1])

        print("\nRanking de G1 (más sospechoso primero):")
        for row in report.to_rows(self.g1.entities, self.g1.relations):
            marker = '⚠' if row['label'] < 0 else ' '
            print(f"  {marker} {row['rank']}. ({row['s']}, {row['r']}, {row['o']})  φ = {row['score']:+.4f}")
        print(f"\nRecall of Ranking: {report.metrics['recall']:.2f}")
        return True

    def ejecutar_demo(self):
        self.print_header("DEMO - VALIDACIÓN DE GRAFOS CON UN GRAFO EXTERNO")

        pasos = [
            self.paso_1_grafos,
            self.paso_2_alineamiento,
            self.paso_3_relaciones_negativas,
            self.paso_4_negativos,
            self.paso_5_entrenar_y_validar,
        ]

        for paso_func in pasos:
            if not paso_func():
                print("\n⚠ Hubo un problema en este paso.")
                return False
            self.wait_for_user()

        self.print_header("✓ DEMO COMPLETADO")
        print("Próximos pasos sugeridos:")
        print("  1. Estadísticas de tus grafos:  python main.py ingest-check --target g1.tsv --external g2.tsv")
        print("  2. Entrenar:                    python main.py train --target g1.tsv --external g2.tsv")
        print("  3. Estudio de ablación:         python main.py experiment --study ablation")
        return True


if __name__ == '__main__':
    try:
        DemoEjemplo(interactive='--interactive' in sys.argv).ejecutar_demo()
    except KeyboardInterrupt:
        print("\n\n✗ Demo interrumpido por el usuario")
